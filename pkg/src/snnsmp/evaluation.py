"""Predictive sampling and metrics for trained networks."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import ControlPath, embed_input, forward_step
from .exceptions import ConfigurationError
from .streams import as_generator, substream
from .tasks import Dataset

__all__ = [
    "PredictiveSample",
    "Band",
    "simulate_outputs",
    "predict",
    "predict_grid",
    "band",
    "classification_metrics",
    "weight_surface",
    "param_estimate",
    "curve_metrics",
    "write_json",
    "write_band_csv",
    "write_surface_csv",
]


@dataclass
class PredictiveSample:
    """``S`` readouts of the network for one input, shape (S, label_dim)."""

    input: np.ndarray
    outputs: np.ndarray

    @property
    def count(self) -> int:
        return self.outputs.shape[0]


@dataclass
class Band:
    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)


def simulate_outputs(controls: ControlPath, x0, noises, label_dim: int = 1):
    """Readouts ``X_N[:label_dim]`` for a batch of inputs (B, P) and noises (B, N, D)."""
    x = embed_input(x0, controls.width)
    for n in range(controls.depth):
        x = forward_step(x, controls[n], noises[:, n], controls.h)
    return x[..., :label_dim]


def predict(controls: ControlPath, x0, S: int, rng=None, label_dim: int = 1) -> PredictiveSample:
    """Run the network ``S`` times on ``x0`` with independent noise."""
    if int(S) < 1:
        raise ConfigurationError(f"S must be >= 1, got {S}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    noises = as_generator(rng).standard_normal((int(S), controls.depth, controls.width))
    batch = np.broadcast_to(x0, (int(S), x0.shape[0]))
    return PredictiveSample(x0, simulate_outputs(controls, batch, noises, label_dim))


def predict_grid(controls: ControlPath, points, S: int, seed: int, label_dim: int = 1) -> list[PredictiveSample]:
    """:func:`predict` at each point with the per-point stream ``(seed, p)``."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    return [predict(controls, p, S, substream(seed, i), label_dim) for i, p in enumerate(points)]


def band(samples: Sequence[PredictiveSample], level: float = 0.95, grid=None) -> Band:
    """Mean and empirical central-``level`` percentile band per grid point.

    Percentiles use linear interpolation between order statistics.
    """
    if not 0.0 < level < 1.0:
        raise ConfigurationError(f"level must lie in (0, 1), got {level}")
    outs = [np.asarray(s.outputs if isinstance(s, PredictiveSample) else s, dtype=np.float64).reshape(-1) for s in samples]
    if any(o.size < 100 for o in outs):
        raise ConfigurationError("band needs at least 100 samples per grid point")
    if grid is None:
        grid = np.array([s.input for s in samples]) if isinstance(samples[0], PredictiveSample) else np.arange(len(outs))
    tail = 100.0 * (1.0 - level) / 2.0
    lower = np.array([np.percentile(o, tail) for o in outs])
    upper = np.array([np.percentile(o, 100.0 - tail) for o in outs])
    mean = np.array([o.mean() for o in outs])
    return Band(np.asarray(grid, dtype=np.float64).reshape(len(outs), -1).squeeze(-1), mean, lower, upper, float(level))


def _circle_params(testset: Dataset):
    r = float(testset.parameters.get("r", 0.5))
    frac = float(testset.parameters.get("noise_frac", 0.1))
    return r, frac


def classification_metrics(controls: ControlPath, testset: Dataset, S: int = 1, threshold: float = 0.5, rng=None) -> dict:
    """Accuracy of thresholded sampled outputs on a circle-classification set.

    The first vote of each point is the single-sample prediction; with
    ``S > 1`` the majority vote accuracy is reported as well.  The noise band
    is ``| |p| - r | <= 2 noise_frac r``.
    """
    if testset.task != "circle-classification":
        raise ConfigurationError(f"classification metrics need a circle-classification set, got {testset.task!r}")
    if int(S) < 1:
        raise ConfigurationError(f"S must be >= 1, got {S}")
    rng = as_generator(rng)
    Q = testset.count
    noises = rng.standard_normal((Q * S, controls.depth, controls.width))
    x0 = np.repeat(testset.inputs, S, axis=0)
    votes = simulate_outputs(controls, x0, noises)[:, 0].reshape(Q, S) > threshold
    labels = testset.labels[:, 0] > 0.5
    r, frac = _circle_params(testset)
    in_band = np.abs(np.hypot(testset.inputs[:, 0], testset.inputs[:, 1]) - r) <= 2.0 * frac * r
    wrong = votes[:, 0] != labels
    out = {
        "count": int(Q),
        "accuracy": float(np.mean(~wrong)),
        "accuracy_outside_band": float(np.mean(~wrong[~in_band])) if (~in_band).any() else float("nan"),
        "accuracy_inside_band": float(np.mean(~wrong[in_band])) if in_band.any() else float("nan"),
        "misclassified": int(wrong.sum()),
        "misclassified_in_band_fraction": float(np.mean(in_band[wrong])) if wrong.any() else 1.0,
        "band_fraction": float(np.mean(in_band)),
    }
    if S > 1:
        majority = votes.mean(axis=1) > 0.5
        out["majority_accuracy"] = float(np.mean(majority == labels))
        out["majority_accuracy_outside_band"] = float(np.mean((majority == labels)[~in_band]))
    return out


def weight_surface(controls: ControlPath, resolution: int = 101, S: int = 10, rng=None):
    """Mean sampled readout at the centres of a ``resolution`` square grid on [-1, 1]^2.

    Returns ``(centres, surface)`` with ``surface[i, j]`` the mean at
    ``(centres[j], centres[i])``.
    """
    rng = as_generator(rng)
    edges = np.linspace(-1.0, 1.0, resolution + 1)
    centres = 0.5 * (edges[:-1] + edges[1:])
    gx, gy = np.meshgrid(centres, centres)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    noises = rng.standard_normal((pts.shape[0] * S, controls.depth, controls.width))
    outs = simulate_outputs(controls, np.repeat(pts, S, axis=0), noises)[:, 0]
    return centres, outs.reshape(-1, S).mean(axis=1).reshape(resolution, resolution)


def param_estimate(controls: ControlPath, observations, S: int = 2000, rng=None):
    """Pool ``S`` network outputs per observation; the estimate is the pooled mean."""
    observations = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    if observations.shape[0] < 1:
        raise ConfigurationError("need at least one observation")
    rng = as_generator(rng)
    noises = rng.standard_normal((observations.shape[0] * S, controls.depth, controls.width))
    pooled = simulate_outputs(controls, np.repeat(observations, S, axis=0), noises)[:, 0]
    return float(pooled.mean()), pooled


def curve_metrics(bnd: Band, true_mean, true_lower, true_upper) -> dict:
    """RMSE of the mean curve, coverage of the true mean, band half-width mismatch."""
    true_mean = np.asarray(true_mean, dtype=np.float64)
    true_lower = np.asarray(true_lower, dtype=np.float64)
    true_upper = np.asarray(true_upper, dtype=np.float64)
    if not (true_mean.shape == true_lower.shape == true_upper.shape == bnd.mean.shape):
        raise ConfigurationError("reference curves do not match the band grid")
    covered = (bnd.lower <= true_mean) & (true_mean <= bnd.upper)
    true_half = 0.5 * (true_upper - true_lower)
    return {
        "rmse": float(np.sqrt(np.mean((bnd.mean - true_mean) ** 2))),
        "coverage": float(np.mean(covered)),
        "alignment": float(np.mean(np.abs(bnd.half_width - true_half))),
        "mean_half_width": float(np.mean(bnd.half_width)),
        "true_mean_half_width": float(np.mean(true_half)),
    }


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def write_band_csv(bnd: Band, path, true_mean=None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        header = ["x", "mean", "lower", "upper"] + (["true_mean"] if true_mean is not None else [])
        w.writerow(header)
        for i in range(bnd.mean.shape[0]):
            row = [bnd.grid[i], bnd.mean[i], bnd.lower[i], bnd.upper[i]]
            if true_mean is not None:
                row.append(true_mean[i])
            w.writerow([repr(float(v)) for v in row])
    return path


def write_surface_csv(centres, surface, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "weight"])
        for i, yv in enumerate(centres):
            for j, xv in enumerate(centres):
                w.writerow([repr(float(xv)), repr(float(yv)), repr(float(surface[i, j]))])
    return path
