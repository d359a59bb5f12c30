"""Finite-difference verification of the path-wise and Monte Carlo gradients.

Both checks compare ``h * grad`` with central differences, because the
trainer's gradient is a per-unit-time quantity (see :mod:`snnsmp.trainer`).
The reported relative error of a coordinate is
``|h g - fd| / max(|fd|, floor)`` and passes when it is at most ``rtol``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ControlPath, NetConfig
from .exceptions import ConfigurationError
from .streams import philox
from .tasks import Dataset
from .trainer import ControlGradient, _sweep, evaluate_cost, init_controls, mc_gradient

__all__ = [
    "BLOCKS",
    "BlockReport",
    "check_instance",
    "pathwise_check",
    "mc_check",
    "sgd_samples",
]

BLOCKS = ("gradW", "gradB", "gradSigma")
_ATTR = {"gradW": "W", "gradB": "b", "gradSigma": "sigma"}


@dataclass
class BlockReport:
    block: str
    max_rel_error: float
    worst_index: tuple
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error <= self.tolerance)


def check_instance(width=2, depth=3, h=0.5, count=4, sigma=0.3, seed=0):
    """Small random network and dataset used by the verification gates.

    Sizes are capped at ``D, N <= 4`` so the coordinate-wise differences stay
    cheap.  Returns ``(controls, dataset)``.
    """
    if not (1 <= width <= 4 and 1 <= depth <= 4):
        raise ConfigurationError(f"gradient checks need D <= 4 and N <= 4, got D={width}, N={depth}")
    rng = philox(seed, 9)
    net = NetConfig(width, depth, h, input_dim=min(2, width), label_dim=1)
    base = init_controls(net, rng)
    controls = ControlPath(base.W, rng.normal(0.0, 0.5, base.b.shape), np.full(base.sigma.shape, float(sigma)), h)
    x0 = rng.uniform(-1.0, 1.0, (count, net.input_dim))
    gamma = rng.uniform(0.0, 2.0, (count, 1))
    return controls, Dataset(x0, gamma, "custom", {}, seed)


def _tamper(grad: ControlGradient, flip) -> ControlGradient:
    if not flip:
        return grad
    if flip not in BLOCKS:
        raise ConfigurationError(f"unknown gradient block {flip!r}; expected one of {', '.join(BLOCKS)}")
    out = ControlGradient(grad.W.copy(), grad.b.copy(), grad.sigma.copy())
    arr = getattr(out, _ATTR[flip])
    arr *= -1.0
    return out


def _compare(grad: ControlGradient, controls: ControlPath, objective, step, rtol, floor):
    reports = []
    for name in BLOCKS:
        attr = _ATTR[name]
        analytic = controls.h * getattr(grad, attr)
        worst, where = 0.0, ()
        for i in np.ndindex(analytic.shape):
            plus, minus = controls.copy(), controls.copy()
            getattr(plus, attr)[i] += step
            getattr(minus, attr)[i] -= step
            fd = (objective(plus) - objective(minus)) / (2.0 * step)
            rel = abs(analytic[i] - fd) / max(abs(fd), floor)
            if rel > worst or not where:
                worst, where = rel, i
        reports.append(BlockReport(name, float(worst), tuple(int(j) for j in where), rtol))
    return reports


def pathwise_check(controls, x0, gamma, noise, *, step=1e-5, rtol=1e-4, atol=1e-8, flip=None):
    """Left-point path-wise gradient against differences of the sampled loss.

    ``noise`` (N, D) is held fixed.  ``flip`` names a block whose sign is
    inverted before the comparison; it exists to exercise the detector.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    gamma = np.atleast_2d(np.asarray(gamma, dtype=np.float64))
    omega = np.asarray(noise, dtype=np.float64)[None]
    _, (gW, gb, gs) = _sweep(controls, x0, gamma, omega, gamma.shape[1], "left")
    grad = _tamper(ControlGradient(gW[0], gb[0], gs[0]), flip)

    def loss(c):
        return float(_sweep(c, x0, gamma, omega, gamma.shape[1], "left", with_grad=False)[0][0])

    return _compare(grad, controls, loss, step, rtol, atol / rtol)


def mc_check(controls, dataset, M=10_000, seed=0, *, step=1e-4, rtol=1e-2, floor=1e-6, workers=1, flip=None):
    """Left-point :func:`mc_gradient` against differences of :func:`evaluate_cost`.

    Both use the integer ``seed`` so every evaluation sees the same noise.
    """
    grad = _tamper(mc_gradient(controls, dataset, M, seed, "left", workers), flip)

    def cost(c):
        return evaluate_cost(c, dataset, M, seed, workers)

    return _compare(grad, controls, cost, step, rtol, floor)


def sgd_samples(controls, dataset, count, seed=0, scheme="right"):
    """``count`` single-sample SGD gradients at fixed controls, flattened per row."""
    rng = philox(seed, 5)
    idx = rng.integers(dataset.count, size=count)
    omega = rng.standard_normal((count, controls.depth, controls.width))
    _, (gW, gb, gs) = _sweep(controls, dataset.inputs[idx], dataset.labels[idx], omega, dataset.label_dim, scheme)
    return np.hstack([gW.reshape(count, -1), gb.reshape(count, -1), gs.reshape(count, -1)])
