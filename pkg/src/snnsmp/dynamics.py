"""Layer dynamics of the stochastic residual network.

Each layer advances the state by one Euler-Maruyama step

    X_{n+1} = X_n + h * sigmoid(W_n X_n + b_n) + sqrt(h) * sigma_n * omega_n

with diagonal diffusion ``sigma_n`` and standard Gaussian ``omega_n``.  All
state-level functions broadcast over leading batch axes, so ``x`` may be a
single ``(D,)`` vector or a ``(B, D)`` stack of independent states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import expit

from .exceptions import ConfigurationError, PropagationError
from .streams import as_generator

__all__ = [
    "NetConfig",
    "LayerControl",
    "ControlPath",
    "StatePath",
    "sigmoid",
    "drift",
    "drift_jacobian_state",
    "drift_param_gradient",
    "diffusion_gradient",
    "forward_step",
    "embed_input",
    "simulate_path",
]


@dataclass(frozen=True)
class NetConfig:
    """Network shape: ``width`` neurons per layer, ``depth`` layers of step ``h``."""

    width: int
    depth: int
    h: float = 1.0
    input_dim: int = 1
    label_dim: int = 1

    def __post_init__(self):
        if int(self.depth) < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        if not self.h > 0 or not math.isfinite(self.h):
            raise ConfigurationError(f"step size h must be positive, got {self.h}")
        if not 1 <= int(self.input_dim) <= int(self.width):
            raise ConfigurationError(
                f"input_dim must lie in [1, width={self.width}], got {self.input_dim}"
            )
        if not 1 <= int(self.label_dim) <= int(self.width):
            raise ConfigurationError(
                f"label_dim must lie in [1, width={self.width}], got {self.label_dim}"
            )

    @property
    def horizon(self) -> float:
        return self.depth * self.h

    def to_dict(self) -> dict:
        return {
            "width": int(self.width),
            "depth": int(self.depth),
            "h": float(self.h),
            "input_dim": int(self.input_dim),
            "label_dim": int(self.label_dim),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(
            width=int(d["width"]),
            depth=int(d["depth"]),
            h=float(d.get("h", 1.0)),
            input_dim=int(d.get("input_dim", 1)),
            label_dim=int(d.get("label_dim", 1)),
        )


@dataclass(frozen=True)
class LayerControl:
    """Control of one layer: weights ``W`` (D, D), bias ``b`` (D,), diffusion ``sigma`` (D,)."""

    W: np.ndarray
    b: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        D = np.shape(self.b)[-1] if np.ndim(self.b) else 0
        if np.shape(self.W) != (D, D) or np.shape(self.sigma) != (D,) or np.ndim(self.b) != 1:
            raise ConfigurationError(
                "layer control shapes disagree: "
                f"W{np.shape(self.W)}, b{np.shape(self.b)}, sigma{np.shape(self.sigma)}"
            )

    @property
    def width(self) -> int:
        return self.b.shape[0]


class ControlPath:
    """The full control sequence ``u_0 .. u_{N-1}`` stored as stacked arrays.

    ``W`` has shape (N, D, D), ``b`` and ``sigma`` have shape (N, D).  ``h`` is
    the time step of the partition the controls live on.  Indexing returns a
    :class:`LayerControl` view of one layer.
    """

    def __init__(self, W, b, sigma, h: float = 1.0):
        W = np.array(W, dtype=np.float64)
        b = np.array(b, dtype=np.float64)
        sigma = np.array(sigma, dtype=np.float64)
        if W.ndim != 3 or b.ndim != 2 or sigma.ndim != 2:
            raise ConfigurationError("ControlPath expects W (N,D,D), b (N,D), sigma (N,D)")
        N, D = b.shape
        if W.shape != (N, D, D) or sigma.shape != (N, D):
            raise ConfigurationError(
                f"ControlPath shapes disagree: W{W.shape}, b{b.shape}, sigma{sigma.shape}"
            )
        if not (np.isfinite(W).all() and np.isfinite(b).all() and np.isfinite(sigma).all()):
            raise PropagationError("ControlPath contains non-finite entries")
        if not h > 0:
            raise ConfigurationError(f"step size h must be positive, got {h}")
        self.W, self.b, self.sigma, self.h = W, b, sigma, float(h)

    @classmethod
    def from_layers(cls, layers: Sequence[LayerControl], h: float = 1.0) -> "ControlPath":
        if not layers:
            raise ConfigurationError("a control path needs at least one layer")
        return cls(
            np.stack([layer.W for layer in layers]),
            np.stack([layer.b for layer in layers]),
            np.stack([layer.sigma for layer in layers]),
            h=h,
        )

    @property
    def depth(self) -> int:
        return self.b.shape[0]

    @property
    def width(self) -> int:
        return self.b.shape[1]

    def __len__(self) -> int:
        return self.depth

    def __getitem__(self, n: int) -> LayerControl:
        return LayerControl(self.W[n], self.b[n], self.sigma[n])

    def __iter__(self) -> Iterator[LayerControl]:
        return (self[n] for n in range(self.depth))

    @property
    def layers(self) -> list[LayerControl]:
        return list(self)

    def copy(self) -> "ControlPath":
        return ControlPath(self.W, self.b, self.sigma, self.h)

    def conforms_to(self, net: NetConfig) -> bool:
        return self.depth == net.depth and self.width == net.width and self.h == float(net.h)

    def check(self, net: NetConfig) -> None:
        if not self.conforms_to(net):
            raise ConfigurationError(
                f"controls (N={self.depth}, D={self.width}, h={self.h}) do not match "
                f"network (N={net.depth}, D={net.width}, h={net.h})"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ControlPath):
            return NotImplemented
        return (
            self.h == other.h
            and np.array_equal(self.W, other.W)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.sigma, other.sigma)
        )

    def __repr__(self) -> str:
        return f"ControlPath(depth={self.depth}, width={self.width}, h={self.h})"

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "W": self.W.tolist(),
            "b": self.b.tolist(),
            "sigma": self.sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControlPath":
        return cls(d["W"], d["b"], d["sigma"], h=float(d["h"]))


@dataclass
class StatePath:
    """One simulated realization: ``states`` (N+1, D) and ``noises`` (N, D)."""

    states: np.ndarray
    noises: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


def sigmoid(z):
    """Logistic function, evaluated without overflow for large ``|z|``."""
    return expit(np.asarray(z, dtype=np.float64))


def _preactivation(x, ctrl: LayerControl):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != ctrl.W.shape[1]:
        raise ConfigurationError(f"state has width {x.shape[-1]}, layer expects {ctrl.W.shape[1]}")
    return x @ ctrl.W.T + ctrl.b


def drift(x, ctrl: LayerControl):
    """``sigmoid(W x + b)``."""
    return sigmoid(_preactivation(x, ctrl))


def drift_jacobian_state(x, ctrl: LayerControl):
    """Jacobian ``d drift_i / d x_j = s_i (1 - s_i) W_ij``."""
    s = drift(x, ctrl)
    return (s * (1.0 - s))[..., :, None] * ctrl.W


def drift_param_gradient(x, ctrl: LayerControl, y):
    """Gradients of ``y . drift(x, u)`` with respect to ``W`` and ``b``.

    Returns ``(v x^T, v)`` with ``v = s (1 - s) y``; batched inputs give
    batched outer products.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != ctrl.width:
        raise ConfigurationError(f"adjoint has width {y.shape[-1]}, layer expects {ctrl.width}")
    s = drift(x, ctrl)
    v = s * (1.0 - s) * y
    return v[..., :, None] * x[..., None, :], v


def diffusion_gradient(z):
    """Gradient of ``z . (sigma * omega-term)`` in ``sigma``: the identity on ``z``."""
    return np.array(z, dtype=np.float64, copy=True)


def forward_step(x, ctrl: LayerControl, omega, h: float):
    """One layer: ``x + h drift(x) + sqrt(h) sigma * omega``."""
    if not h > 0:
        raise ConfigurationError(f"step size h must be positive, got {h}")
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape[-1] != ctrl.width:
        raise ConfigurationError(f"noise has width {omega.shape[-1]}, layer expects {ctrl.width}")
    x_next = x + h * drift(x, ctrl) + math.sqrt(h) * (ctrl.sigma * omega)
    if not np.isfinite(x_next).all():
        raise PropagationError("forward step produced a non-finite state")
    return x_next


def embed_input(x0, width: int):
    """Zero-pad inputs into the first coordinates of a ``width``-vector."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape[-1] > width:
        raise ConfigurationError(f"input of dimension {x0.shape[-1]} does not fit width {width}")
    out = np.zeros(x0.shape[:-1] + (width,))
    out[..., : x0.shape[-1]] = x0
    return out


def simulate_path(x0, controls: ControlPath, rng=None, noises=None) -> StatePath:
    """Simulate one state path from input ``x0``.

    Noise is drawn from ``rng`` as one (N, D) standard Gaussian block unless
    ``noises`` is given explicitly (used for common-random-number checks).
    """
    N, D = controls.depth, controls.width
    if noises is None:
        noises = as_generator(rng).standard_normal((N, D))
    else:
        noises = np.asarray(noises, dtype=np.float64)
        if noises.shape != (N, D):
            raise ConfigurationError(f"noises must have shape {(N, D)}, got {noises.shape}")
    states = np.empty((N + 1, D))
    states[0] = embed_input(x0, D)
    for n in range(N):
        states[n + 1] = forward_step(states[n], controls[n], noises[n], controls.h)
    return StatePath(states, noises)
