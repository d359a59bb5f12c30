from functools import lru_cache

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from snnsmp.dynamics import ControlPath, NetConfig

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_controls(width, depth, h=1.0, sigma=0.2, seed=0):
    rng = np.random.default_rng(seed)
    return ControlPath(
        rng.standard_normal((depth, width, width)),
        rng.normal(0.0, 0.5, (depth, width)),
        np.full((depth, width), sigma),
        h,
    )


@pytest.fixture
def small_net():
    return NetConfig(width=2, depth=3, h=0.5, input_dim=2, label_dim=1)


ACCEPTANCE = []


def record(criterion, passed, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@lru_cache(maxsize=None)
def benchmark(task, seed):
    """Train and evaluate the built-in configuration once per session."""
    from snnsmp.experiments import preset, run

    controls, log, metrics, artifacts = run(preset(task, seed))
    return controls, log, metrics, artifacts
