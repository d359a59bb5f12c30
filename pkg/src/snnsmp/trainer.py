"""Gradient assembly and stochastic gradient descent over control paths.

The gradient returned by :func:`pathwise_gradient` and :func:`mc_gradient`
is the per-unit-time gradient ``f_u^T Y + g_u^T Z`` used in the update
``u <- u - eta * grad``.  The derivative of the sampled loss with respect
to the layer-``n`` parameters is ``h`` times this quantity; for ``h = 1``
the two coincide.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .adjoint import AdjointPath, LossSpec, normalize_scheme, solve_adjoint
from .dynamics import (
    ControlPath,
    NetConfig,
    StatePath,
    diffusion_gradient,
    drift_param_gradient,
    embed_input,
    simulate_path,
)
from ._kernels import sgd_chunk
from .exceptions import ConfigurationError, PropagationError, TrainingDiverged
from .streams import as_generator, draw_seed, substream
from .tasks import Dataset

__all__ = [
    "TrajectoryBundle",
    "ControlGradient",
    "TrainConfig",
    "TrainingLog",
    "learning_rate",
    "pathwise_gradient",
    "sgd_step",
    "train",
    "mc_gradient",
    "evaluate_cost",
    "init_controls",
]

logger = logging.getLogger(__name__)


@dataclass
class TrajectoryBundle:
    """One state path with its adjoint path and the label it was solved for."""

    path: StatePath
    adjoint: AdjointPath
    gamma: np.ndarray


@dataclass
class ControlGradient:
    """Per-layer gradient blocks mirroring :class:`ControlPath`."""

    W: np.ndarray
    b: np.ndarray
    sigma: np.ndarray

    @classmethod
    def zeros_like(cls, controls: ControlPath) -> "ControlGradient":
        return cls(np.zeros_like(controls.W), np.zeros_like(controls.b), np.zeros_like(controls.sigma))

    def blocks(self) -> dict:
        return {"W": self.W, "b": self.b, "sigma": self.sigma}

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b.ravel(), self.sigma.ravel()])

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.W**2) + np.sum(self.b**2) + np.sum(self.sigma**2)))

    def scaled(self, c: float) -> "ControlGradient":
        return ControlGradient(c * self.W, c * self.b, c * self.sigma)


@dataclass
class TrainConfig:
    """SGD hyperparameters.

    ``train_sigma=False`` masks the diffusion gradient so ``sigma`` keeps its
    initial value; ``log_every`` controls the cadence of emitted log records
    (losses are kept for every iteration regardless).
    """

    K: int = 1000
    lr_scale: float = 1.0
    seed: int = 0
    snapshot_every: int = 0
    scheme: str = "right"
    train_sigma: bool = True
    log_every: int = 100

    def __post_init__(self):
        if int(self.K) < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.K}")
        if not self.lr_scale > 0:
            raise ConfigurationError(f"lr_scale must be positive, got {self.lr_scale}")
        self.scheme = normalize_scheme(self.scheme)
        if int(self.log_every) < 1:
            raise ConfigurationError(f"log_every must be >= 1, got {self.log_every}")

    def to_dict(self) -> dict:
        return {
            "K": int(self.K),
            "lr_scale": float(self.lr_scale),
            "seed": int(self.seed),
            "snapshot_every": int(self.snapshot_every),
            "scheme": self.scheme,
            "train_sigma": bool(self.train_sigma),
            "log_every": int(self.log_every),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: d[k] for k in cls().to_dict() if k in d})


@dataclass
class TrainingLog:
    """Per-iteration training trace; ``records`` thins it to ``log_every``."""

    iteration: list = field(default_factory=list)
    index: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    lr: list = field(default_factory=list)

    def extend(self, k, q, loss, gnorm, eta):
        self.iteration.extend(int(v) for v in k)
        self.index.extend(int(v) for v in q)
        self.loss.extend(float(v) for v in loss)
        self.grad_norm.extend(float(v) for v in gnorm)
        self.lr.extend(float(v) for v in eta)

    def __len__(self) -> int:
        return len(self.iteration)

    def copy(self) -> "TrainingLog":
        return TrainingLog(*(list(getattr(self, f)) for f in ("iteration", "index", "loss", "grad_norm", "lr")))

    def records(self, every: int = 1):
        for i, k in enumerate(self.iteration):
            if k % every == 0 or i == len(self.iteration) - 1:
                yield k, self.index[i], self.loss[i], self.grad_norm[i], self.lr[i]

    def tail_mean(self, fraction: float) -> float:
        n = max(1, int(round(len(self.loss) * fraction)))
        return float(np.mean(self.loss[-n:]))


def learning_rate(k: int, cfg: TrainConfig) -> float:
    """``lr_scale / sqrt(k)`` for 1-based iteration ``k``."""
    if k < 1:
        raise ConfigurationError(f"iterations are 1-based, got k={k}")
    return cfg.lr_scale / math.sqrt(k)


def pathwise_gradient(bundle: TrajectoryBundle, controls: ControlPath) -> ControlGradient:
    """Single-sample gradient ``f_u(X_n, u_n)^T Y + g_u^T Z_n`` for every layer.

    The drift term uses ``Y_n`` under the right-point scheme and ``Y_{n+1}``
    under the left-point scheme.
    """
    N, D = controls.depth, controls.width
    states, y, z = bundle.path.states, bundle.adjoint.y, bundle.adjoint.z
    if states.shape != (N + 1, D) or y.shape != (N + 1, D) or z.shape != (N, D):
        raise ConfigurationError("trajectory bundle does not conform to the controls")
    shift = 1 if bundle.adjoint.scheme == "left" else 0
    grad = ControlGradient.zeros_like(controls)
    for n in range(N):
        grad.W[n], grad.b[n] = drift_param_gradient(states[n], controls[n], y[n + shift])
        grad.sigma[n] = diffusion_gradient(z[n])
    return grad


def sgd_step(controls: ControlPath, grad: ControlGradient, eta: float) -> ControlPath:
    """``controls - eta * grad`` blockwise."""
    if grad.W.shape != controls.W.shape or grad.b.shape != controls.b.shape or grad.sigma.shape != controls.sigma.shape:
        raise ConfigurationError("gradient shape does not mirror the control path")
    W = controls.W - eta * grad.W
    b = controls.b - eta * grad.b
    sigma = controls.sigma - eta * grad.sigma
    if not (np.isfinite(W).all() and np.isfinite(b).all() and np.isfinite(sigma).all()):
        raise PropagationError("SGD update produced non-finite controls")
    return ControlPath(W, b, sigma, controls.h)


def init_controls(net: NetConfig, rng=None) -> ControlPath:
    """Standard normal weights, biases 0.05, diffusion coefficients 0.01."""
    rng = as_generator(rng)
    N, D = net.depth, net.width
    W = rng.standard_normal((N, D, D))
    return ControlPath(W, np.full((N, D), 0.05), np.full((N, D), 0.01), h=net.h)


def _sweep(controls: ControlPath, x0, gamma, omega, label_dim: int, scheme: str, with_grad: bool = True):
    """Fused forward/backward pass over a batch of ``B`` paths.

    ``x0`` is (B, input_dim), ``gamma`` (B, label_dim), ``omega`` (B, N, D).
    Returns ``(loss, (gW, gb, gs))`` with per-path gradient blocks of shape
    (B, N, D, D), (B, N, D), (B, N, D); the gradient tuple is ``None`` when
    ``with_grad`` is false.
    """
    W, b, sig, h = controls.W, controls.b, controls.sigma, controls.h
    B, N, D = omega.shape
    sqh = math.sqrt(h)
    X = np.empty((B, N + 1, D))
    S = np.empty((B, N + 1, D))
    x = embed_input(x0, D)
    X[:, 0] = x
    for n in range(N):
        s = expit(x @ W[n].T + b[n])
        S[:, n] = s
        x = x + h * s + sqh * (sig[n] * omega[:, n])
        X[:, n + 1] = x
    r = x[:, :label_dim] - gamma
    loss = np.sum(r * r, axis=1)
    if not np.isfinite(loss).all():
        raise PropagationError("forward sweep produced a non-finite output")
    if not with_grad:
        return loss, None

    # right-point evaluation at the last step reuses u_{N-1} on X_N
    S[:, N] = expit(x @ W[N - 1].T + b[N - 1])
    gW = np.empty((B, N, D, D))
    gb = np.empty((B, N, D))
    gs = np.empty((B, N, D))
    y = np.zeros((B, D))
    y[:, :label_dim] = 2.0 * r
    right = scheme == "right"
    for n in range(N - 1, -1, -1):
        if right:
            s_eval, W_eval = S[:, n + 1], W[min(n + 1, N - 1)]
        else:
            s_eval, W_eval = S[:, n], W[n]
        y_prev = y + h * ((s_eval * (1.0 - s_eval) * y) @ W_eval)
        gs[:, n] = sqh * (y * omega[:, n]) / h
        s = S[:, n]
        v = s * (1.0 - s) * (y_prev if right else y)
        gW[:, n] = v[:, :, None] * X[:, n, None, :]
        gb[:, n] = v
        y = y_prev
    if not (np.isfinite(gW).all() and np.isfinite(gb).all() and np.isfinite(gs).all()):
        raise PropagationError("backward sweep produced a non-finite gradient")
    return loss, (gW, gb, gs)


CHUNK = 1024


def iteration_draws(seed: int, chunk: int, Q: int, N: int, D: int):
    """Sample indices and noise for iterations ``chunk*CHUNK + 1 .. (chunk+1)*CHUNK``.

    Draws depend only on ``(seed, chunk)``, which makes any iteration's
    randomness reproducible without replaying earlier ones.
    """
    rng = substream(seed, 1, chunk)
    idx = rng.integers(Q, size=CHUNK)
    omega = rng.standard_normal((CHUNK, N, D))
    return idx, omega


def train(
    dataset: Dataset,
    net: NetConfig,
    cfg: TrainConfig,
    init: ControlPath,
    *,
    start_iteration: int = 0,
    log: TrainingLog | None = None,
    on_snapshot=None,
):
    """Single-sample SGD on the control path.

    Each iteration draws one sample uniformly with replacement, simulates
    one state path, solves the adjoint along it and applies
    ``u <- u - eta_k * grad`` with ``eta_k = lr_scale / sqrt(k)``.

    ``init`` with ``start_iteration=k`` resumes a run after iteration ``k``.
    ``on_snapshot(k, controls, log)`` is called every ``cfg.snapshot_every``
    iterations.  Returns ``(controls, log)``.
    """
    init.check(net)
    if dataset.input_dim != net.input_dim or dataset.label_dim != net.label_dim:
        raise ConfigurationError(
            f"dataset dims (input {dataset.input_dim}, label {dataset.label_dim}) do not match "
            f"network (input {net.input_dim}, label {net.label_dim})"
        )
    log = TrainingLog() if log is None else log
    N, D, Q = net.depth, net.width, dataset.count
    controls = init.copy()
    right = cfg.scheme == "right"
    k = int(start_iteration)
    while k < cfg.K:
        chunk, offset = divmod(k, CHUNK)
        stop = min((chunk + 1) * CHUNK, cfg.K)
        if cfg.snapshot_every:
            stop = min(stop, (k // cfg.snapshot_every + 1) * cfg.snapshot_every)
        idx, omega = iteration_draws(cfg.seed, chunk, Q, N, D)
        n = stop - k
        idx, omega = idx[offset : offset + n], omega[offset : offset + n]
        losses, gnorms = np.empty(n), np.empty(n)
        done = sgd_chunk(
            controls.W, controls.b, controls.sigma, controls.h,
            dataset.inputs, dataset.labels, idx, omega,
            k + 1, float(cfg.lr_scale), right, bool(cfg.train_sigma), losses, gnorms,
        )
        iters = np.arange(k + 1, k + 1 + done)
        log.extend(iters, idx[:done], losses[:done], gnorms[:done], cfg.lr_scale / np.sqrt(iters))
        if done < n:
            raise TrainingDiverged(k + done + 1, "non-finite loss or gradient", controls=controls.copy(), log=log)
        k = stop
        if cfg.snapshot_every and k % cfg.snapshot_every == 0 and on_snapshot is not None:
            on_snapshot(k, controls.copy(), log)
    return controls, log


_BLOCK_PATHS = 4096


def _blocks(Q: int, M: int):
    per = max(1, _BLOCK_PATHS // M)
    return [(lo, min(lo + per, Q)) for lo in range(0, Q, per)]


def _block_noise(seed: int, lo: int, hi: int, M: int, N: int, D: int):
    return np.concatenate([substream(seed, q).standard_normal((M, N, D)) for q in range(lo, hi)])


def _map_blocks(fn, blocks, workers: int):
    if workers <= 1:
        return [fn(blk) for blk in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def _check_mc(controls, dataset, M):
    if int(M) < 1:
        raise ConfigurationError(f"M must be >= 1, got {M}")
    if dataset.input_dim > controls.width or dataset.label_dim > controls.width:
        raise ConfigurationError("dataset dimensions exceed the network width")


def mc_gradient(
    controls: ControlPath, dataset: Dataset, M: int, rng=None, scheme: str = "right", workers: int = 1
) -> ControlGradient:
    """Average of path-wise gradients over every sample and ``M`` noise draws.

    Sample ``q`` uses the substream ``(seed, q)``, so an integer ``rng`` gives
    common random numbers with :func:`evaluate_cost`.  Results do not depend
    on ``workers``.
    """
    _check_mc(controls, dataset, M)
    scheme = normalize_scheme(scheme)
    seed = draw_seed(rng)
    N, D, Q = controls.depth, controls.width, dataset.count

    def block(bounds):
        lo, hi = bounds
        omega = _block_noise(seed, lo, hi, M, N, D)
        x0 = np.repeat(dataset.inputs[lo:hi], M, axis=0)
        gamma = np.repeat(dataset.labels[lo:hi], M, axis=0)
        _, (gW, gb, gs) = _sweep(controls, x0, gamma, omega, dataset.label_dim, scheme)
        return gW.sum(axis=0), gb.sum(axis=0), gs.sum(axis=0)

    parts = _map_blocks(block, _blocks(Q, M), workers)
    total = M * Q
    return ControlGradient(
        sum(p[0] for p in parts) / total,
        sum(p[1] for p in parts) / total,
        sum(p[2] for p in parts) / total,
    )


def evaluate_cost(controls: ControlPath, dataset: Dataset, M: int, rng=None, workers: int = 1) -> float:
    """Monte Carlo estimate of the expected loss over the dataset and noise."""
    _check_mc(controls, dataset, M)
    seed = draw_seed(rng)
    N, D, Q = controls.depth, controls.width, dataset.count

    def block(bounds):
        lo, hi = bounds
        omega = _block_noise(seed, lo, hi, M, N, D)
        x0 = np.repeat(dataset.inputs[lo:hi], M, axis=0)
        gamma = np.repeat(dataset.labels[lo:hi], M, axis=0)
        loss, _ = _sweep(controls, x0, gamma, omega, dataset.label_dim, "right", with_grad=False)
        return loss.sum()

    parts = _map_blocks(block, _blocks(Q, M), workers)
    return float(sum(parts) / (M * Q))


def bundle_for(x0, gamma, controls: ControlPath, rng=None, scheme: str = "right", noises=None) -> TrajectoryBundle:
    """Simulate a path from ``x0`` and solve its adjoint for label ``gamma``."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=np.float64))
    path = simulate_path(x0, controls, rng, noises=noises)
    adjoint = solve_adjoint(path, controls, gamma, LossSpec(gamma.shape[0], controls.width), scheme)
    return TrajectoryBundle(path, adjoint, gamma)
