"""Seeded generators for the benchmark tasks and the dataset file format.

The file format is one JSON document::

    {"header": {"task": ..., "parameters": {...}, "seed": ..., "input_dim": ...,
                "label_dim": ..., "count": ...},
     "records": [
      [input..., label...],
      ...
     ]}

with one record per line, so parse errors can be reported by record.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, DatasetError
from .streams import philox

__all__ = [
    "TASKS",
    "Dataset",
    "gen_circle",
    "gen_cubic",
    "gen_tan",
    "gen_param_est",
    "param_observations",
    "cubic_mean",
    "tan_mean",
    "generate",
    "write_dataset",
    "read_dataset",
]

TASKS = ("circle-classification", "cubic-regression", "tan-regression", "param-estimation")


@dataclass
class Dataset:
    """Labeled samples ``(x0, gamma)`` with generator metadata."""

    inputs: np.ndarray
    labels: np.ndarray
    task: str = "custom"
    parameters: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.float64)
        if labels.ndim == 1:
            labels = labels[:, None]
        self.labels = labels
        if self.inputs.shape[0] < 1:
            raise DatasetError("a dataset needs at least one sample")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise DatasetError(
                f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
            )

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def label_dim(self) -> int:
        return self.labels.shape[1]

    def __len__(self) -> int:
        return self.count

    @property
    def samples(self):
        return list(zip(self.inputs, self.labels))

    def header(self) -> dict:
        return {
            "task": self.task,
            "parameters": dict(self.parameters),
            "seed": self.seed,
            "input_dim": self.input_dim,
            "label_dim": self.label_dim,
            "count": self.count,
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.header() == other.header()
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.labels, other.labels)
        )


def _check_count(count):
    if int(count) < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    return int(count)


def gen_circle(count: int, r: float = 0.5, noise_frac: float = 0.1, seed: int = 0) -> Dataset:
    """Points uniform on [-1, 1]^2 labeled 1 outside a noisy circle, 0 inside.

    Each sample draws its own radius ``r + xi`` with ``xi ~ N(0, (noise_frac r)^2)``.
    """
    count = _check_count(count)
    if not r > 0:
        raise ConfigurationError(f"radius must be positive, got {r}")
    if noise_frac < 0:
        raise ConfigurationError(f"noise_frac must be >= 0, got {noise_frac}")
    rng = philox(seed)
    points = rng.uniform(-1.0, 1.0, size=(count, 2))
    xi = noise_frac * r * rng.standard_normal(count)
    labels = (np.hypot(points[:, 0], points[:, 1]) > r + xi).astype(np.float64)
    return Dataset(
        points, labels, "circle-classification", {"r": float(r), "noise_frac": float(noise_frac)}, int(seed)
    )


def cubic_mean(x):
    return 2.0 + (1.0 + np.asarray(x, dtype=np.float64)) ** 3


def tan_mean(x):
    return 1.0 + np.tan(1.3 * np.asarray(x, dtype=np.float64))


def gen_cubic(count: int, noise_std: float = 0.2, seed: int = 0) -> Dataset:
    """``x ~ U[0, 1]``, label ``2 + (1 + x)^3 + xi`` with ``xi ~ N(0, noise_std^2)``."""
    count = _check_count(count)
    if noise_std < 0:
        raise ConfigurationError(f"noise_std must be >= 0, got {noise_std}")
    rng = philox(seed)
    x = rng.uniform(0.0, 1.0, size=count)
    y = cubic_mean(x) + noise_std * rng.standard_normal(count)
    return Dataset(x[:, None], y, "cubic-regression", {"noise_std": float(noise_std)}, int(seed))


def gen_tan(count: int, sigma: float = 0.05, seed: int = 0) -> Dataset:
    """``x ~ U[0, 1]``, label ``(1 + tan(1.3 x)) (1 + xi)`` with ``xi ~ N(0, sigma^2)``."""
    count = _check_count(count)
    if sigma < 0:
        raise ConfigurationError(f"sigma must be >= 0, got {sigma}")
    rng = philox(seed)
    x = rng.uniform(0.0, 1.0, size=count)
    y = tan_mean(x) * (1.0 + sigma * rng.standard_normal(count))
    return Dataset(x[:, None], y, "tan-regression", {"sigma": float(sigma)}, int(seed))


def param_observations(alpha, count, model_noise_std=0.05, x_center=0.5, x_std=0.05, rng=None):
    """Noisy observations ``(x, exp(alpha x^2 / 2) + noise)`` for given alpha(s)."""
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (count,))
    x = x_center + x_std * rng.standard_normal(count)
    v = np.exp(alpha * x**2 / 2.0) + model_noise_std * rng.standard_normal(count)
    return np.column_stack([x, v])


def gen_param_est(
    count: int,
    alpha_range: tuple[float, float] = (3.0, 5.0),
    model_noise_std: float = 0.05,
    x_center: float = 0.5,
    x_std: float = 0.05,
    seed: int = 0,
) -> Dataset:
    """Inputs ``(x, v)`` from ``v = exp(alpha x^2 / 2) + noise``; label ``alpha``."""
    count = _check_count(count)
    lo, hi = map(float, alpha_range)
    if not lo <= hi:
        raise ConfigurationError(f"alpha_range must be increasing, got {alpha_range}")
    if model_noise_std < 0 or x_std < 0:
        raise ConfigurationError("noise scales must be >= 0")
    rng = philox(seed)
    alpha = rng.uniform(lo, hi, size=count)
    obs = param_observations(alpha, count, model_noise_std, x_center, x_std, rng)
    params = {
        "alpha_range": [lo, hi],
        "model_noise_std": float(model_noise_std),
        "x_center": float(x_center),
        "x_std": float(x_std),
    }
    return Dataset(obs, alpha, "param-estimation", params, int(seed))


_GENERATORS = {
    "circle-classification": gen_circle,
    "cubic-regression": gen_cubic,
    "tan-regression": gen_tan,
    "param-estimation": gen_param_est,
}


def generate(task: str, count: int, seed: int, **parameters) -> Dataset:
    """Dispatch to the generator for ``task`` by name."""
    try:
        gen = _GENERATORS[task]
    except KeyError:
        raise ConfigurationError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}") from None
    if "alpha_range" in parameters:
        parameters["alpha_range"] = tuple(parameters["alpha_range"])
    try:
        return gen(count, seed=seed, **parameters)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {task}: {exc}") from None


def _dumps_record(row) -> str:
    return "[" + ", ".join(repr(float(v)) for v in row) + "]"


def write_dataset(dataset: Dataset, path) -> Path:
    path = Path(path)
    rows = np.hstack([dataset.inputs, dataset.labels])
    lines = ['{"header": ' + json.dumps(dataset.header(), sort_keys=True) + ",", ' "records": [']
    body = [" " + _dumps_record(row) for row in rows]
    lines.append(",\n".join(body))
    lines.append(" ]}")
    path.write_text("\n".join(lines) + "\n")
    return path


_FIRST_RECORD_LINE = 3


def read_dataset(path) -> Dataset:
    """Parse a dataset file; raises :class:`DatasetError` naming the bad record."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        record = max(exc.lineno - _FIRST_RECORD_LINE, 0)
        raise DatasetError(f"malformed JSON at line {exc.lineno}: {exc.msg}", record=record) from None
    if not isinstance(doc, dict) or "header" not in doc or "records" not in doc:
        raise DatasetError("dataset file needs 'header' and 'records'")
    header = doc["header"]
    try:
        input_dim, label_dim, count = (int(header[k]) for k in ("input_dim", "label_dim", "count"))
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"bad header: {exc}") from None
    records = doc["records"]
    width = input_dim + label_dim
    for i, row in enumerate(records):
        if not isinstance(row, list) or len(row) != width:
            got = len(row) if isinstance(row, list) else type(row).__name__
            raise DatasetError(f"expected {width} values (input_dim={input_dim}, label_dim={label_dim}), got {got}", record=i)
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in row):
            raise DatasetError("non-numeric or non-finite value", record=i)
    if len(records) != count:
        raise DatasetError(f"header declares {count} records, file has {len(records)}", record=len(records))
    rows = np.asarray(records, dtype=np.float64).reshape(count, width)
    return Dataset(
        rows[:, :input_dim],
        rows[:, input_dim:],
        task=header.get("task", "custom"),
        parameters=header.get("parameters", {}),
        seed=header.get("seed"),
    )
