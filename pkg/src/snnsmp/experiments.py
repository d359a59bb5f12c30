"""Run configurations and the generate / train / evaluate pipeline."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .dynamics import ControlPath, NetConfig
from .evaluation import (
    band,
    classification_metrics,
    curve_metrics,
    param_estimate,
    predict_grid,
    weight_surface,
)
from .exceptions import CheckpointError, ConfigurationError
from .streams import philox
from .tasks import TASKS, Dataset, cubic_mean, gen_circle, generate, param_observations, tan_mean
from .trainer import TrainConfig, TrainingLog, init_controls, train

__all__ = ["TaskSpec", "EvalConfig", "RunConfig", "PRESETS", "preset", "initial_controls", "fit", "evaluate", "run"]

# stream tags, so data, init and evaluation never share draws for one seed
_INIT, _TEST, _EVAL = 2, 3, 4


@dataclass
class TaskSpec:
    task: str
    count: int = 10_000
    seed: int = 0
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}; expected one of {', '.join(TASKS)}")
        if int(self.count) < 1:
            raise ConfigurationError(f"count must be >= 1, got {self.count}")

    def generate(self) -> Dataset:
        return generate(self.task, self.count, self.seed, **copy.deepcopy(self.parameters))


@dataclass
class EvalConfig:
    samples: int = 2000
    grid_points: int = 101
    level: float = 0.95
    test_count: int = 10_000
    votes: int = 1
    surface_resolution: int = 41
    surface_samples: int = 10
    alphas: tuple = (3.75, 4.0, 4.25)
    observations: int = 100
    seed: int = 0


@dataclass
class RunConfig:
    net: NetConfig
    train: TrainConfig
    task: TaskSpec
    eval: EvalConfig = field(default_factory=EvalConfig)
    init_seed: int = 0

    def __post_init__(self):
        ds_dims = {
            "circle-classification": (2, 1),
            "cubic-regression": (1, 1),
            "tan-regression": (1, 1),
            "param-estimation": (2, 1),
        }[self.task.task]
        if ds_dims != (self.net.input_dim, self.net.label_dim):
            raise ConfigurationError(
                f"task {self.task.task} has (input_dim, label_dim) = {ds_dims}, network has "
                f"({self.net.input_dim}, {self.net.label_dim})"
            )

    def with_seed(self, seed: int) -> "RunConfig":
        cfg = copy.deepcopy(self)
        cfg.task.seed = cfg.train.seed = cfg.eval.seed = cfg.init_seed = int(seed)
        return cfg

    def to_dict(self) -> dict:
        ev = dict(self.eval.__dict__)
        ev["alphas"] = [float(a) for a in ev["alphas"]]
        return {
            "net": self.net.to_dict(),
            "train": self.train.to_dict(),
            "task": {
                "task": self.task.task,
                "count": int(self.task.count),
                "seed": int(self.task.seed),
                "parameters": copy.deepcopy(self.task.parameters),
            },
            "eval": ev,
            "init_seed": int(self.init_seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            ev = dict(d.get("eval", {}))
            if "alphas" in ev:
                ev["alphas"] = tuple(ev["alphas"])
            return cls(
                net=NetConfig.from_dict(d["net"]),
                train=TrainConfig.from_dict(d.get("train", {})),
                task=TaskSpec(**d["task"]),
                eval=EvalConfig(**ev),
                init_seed=int(d.get("init_seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"bad run config: {exc}") from None

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _preset(task, width, depth, input_dim, K, lr_scale, parameters, **eval_kw) -> RunConfig:
    return RunConfig(
        net=NetConfig(width, depth, 1.0, input_dim, 1),
        train=TrainConfig(K=K, lr_scale=lr_scale, log_every=1000),
        task=TaskSpec(task, 10_000, 0, parameters),
        eval=EvalConfig(**eval_kw),
    )


PRESETS = {
    "circle-classification": lambda: _preset(
        "circle-classification", 2, 8, 2, 100_000, 0.5, {"r": 0.5, "noise_frac": 0.1}
    ),
    "cubic-regression": lambda: _preset("cubic-regression", 3, 8, 1, 200_000, 0.1, {"noise_std": 0.2}),
    "tan-regression": lambda: _preset("tan-regression", 3, 12, 1, 200_000, 0.2, {"sigma": 0.05}),
    "param-estimation": lambda: _preset(
        "param-estimation",
        3,
        16,
        2,
        100_000,
        0.2,
        {"alpha_range": [3.0, 5.0], "model_noise_std": 0.05, "x_center": 0.5, "x_std": 0.05},
    ),
}


def preset(task: str, seed: int | None = None) -> RunConfig:
    """Experiment configuration for ``task`` with network sizes and iteration counts of the benchmarks."""
    try:
        cfg = PRESETS[task]()
    except KeyError:
        raise ConfigurationError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}") from None
    return cfg if seed is None else cfg.with_seed(seed)


def initial_controls(cfg: RunConfig) -> ControlPath:
    return init_controls(cfg.net, philox(cfg.init_seed, _INIT))


def _regression_reference(task: str, parameters: dict, grid):
    if task == "cubic-regression":
        mean = cubic_mean(grid)
        half = 1.96 * float(parameters.get("noise_std", 0.2))
        return mean, mean - half, mean + half
    mean = tan_mean(grid)
    half = 1.96 * float(parameters.get("sigma", 0.05)) * np.abs(mean)
    return mean, mean - half, mean + half


def evaluate(cfg: RunConfig, controls: ControlPath, log: TrainingLog | None = None):
    """Task-dependent evaluation; returns ``(metrics, artifacts)``.

    ``artifacts`` holds the band or surface arrays for CSV emission.  With a
    training ``log`` the mean loss over its last 5% is reported as well.
    """
    metrics, artifacts = _evaluate(cfg, controls)
    if log is not None and len(log):
        metrics["train_tail_loss"] = log.tail_mean(0.05)
    return metrics, artifacts


def _evaluate(cfg: RunConfig, controls: ControlPath):
    controls.check(cfg.net)
    ev = cfg.eval
    task = cfg.task.task
    if task in ("cubic-regression", "tan-regression"):
        grid = np.linspace(0.0, 1.0, ev.grid_points)
        samples = predict_grid(controls, grid, ev.samples, philox(ev.seed, _EVAL).integers(2**63 - 1))
        bnd = band(samples, ev.level, grid)
        true_mean, lo, hi = _regression_reference(task, cfg.task.parameters, grid)
        metrics = curve_metrics(bnd, true_mean, lo, hi)
        i1, i9 = int(np.argmin(np.abs(grid - 0.1))), int(np.argmin(np.abs(grid - 0.9)))
        metrics["half_width_at_0.1"] = float(bnd.half_width[i1])
        metrics["half_width_at_0.9"] = float(bnd.half_width[i9])
        metrics["output_std_at_0.5"] = float(np.std(samples[int(np.argmin(np.abs(grid - 0.5)))].outputs))
        return metrics, {"band": bnd, "true_mean": true_mean}
    if task == "circle-classification":
        p = cfg.task.parameters
        testset = gen_circle(ev.test_count, p.get("r", 0.5), p.get("noise_frac", 0.1), seed=int(philox(ev.seed, _TEST).integers(2**63 - 1)))
        metrics = classification_metrics(controls, testset, ev.votes, 0.5, philox(ev.seed, _EVAL))
        centres, surface = weight_surface(controls, ev.surface_resolution, ev.surface_samples, philox(ev.seed, _EVAL, 1))
        return metrics, {"surface": (centres, surface)}
    # parameter estimation
    p = cfg.task.parameters
    rng = philox(ev.seed, _EVAL)
    per_alpha = {}
    for alpha in ev.alphas:
        obs = param_observations(alpha, ev.observations, p.get("model_noise_std", 0.05), p.get("x_center", 0.5), p.get("x_std", 0.05), rng)
        est, pooled = param_estimate(controls, obs, ev.samples, rng)
        lo, hi = np.percentile(pooled, [2.5, 97.5])
        per_alpha[repr(float(alpha))] = {
            "estimate": est,
            "abs_error": abs(est - alpha),
            "pooled_std": float(pooled.std()),
            "central95": [float(lo), float(hi)],
            "covers_truth": bool(lo <= alpha <= hi),
        }
    return {"alphas": per_alpha}, {}


def fit(cfg: RunConfig, dataset: Dataset | None = None, resume: Checkpoint | None = None, on_snapshot=None):
    """Train ``cfg`` from its seeded initial guess, or continue from ``resume``.

    ``on_snapshot`` receives a :class:`Checkpoint` every
    ``cfg.train.snapshot_every`` iterations.  Returns ``(controls, log)``.
    """
    dataset = cfg.task.generate() if dataset is None else dataset
    if resume is None:
        init, start, log = initial_controls(cfg), 0, TrainingLog()
    else:
        if resume.config_hash != cfg.digest():
            raise CheckpointError("checkpoint was written for a different run configuration")
        init, start = resume.controls, resume.iteration
        log = resume.log.copy()
    hook = None
    if on_snapshot is not None:
        def hook(k, controls, lg):
            on_snapshot(Checkpoint.after(k, controls, lg.copy(), cfg))
    return train(dataset, cfg.net, cfg.train, init, start_iteration=start, log=log, on_snapshot=hook)


def run(cfg: RunConfig, on_snapshot=None, resume: Checkpoint | None = None):
    """Generate data, train and evaluate; returns ``(controls, log, metrics, artifacts)``."""
    controls, log = fit(cfg, None, resume, on_snapshot)
    metrics, artifacts = evaluate(cfg, controls, log)
    return controls, log, metrics, artifacts
