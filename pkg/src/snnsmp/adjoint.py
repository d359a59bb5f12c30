"""Path-wise solution of the adjoint backward equation.

Along one simulated state path the adjoint pair is computed backwards from
the loss gradient at the output layer:

    Y_N = 2 R^T (R X_N - gamma)
    Y_n = Y_{n+1} + h J^T Y_{n+1}
    Z_n = sqrt(h) * Y_{n+1} * omega_n / h

``J`` is the drift Jacobian evaluated either at ``(X_{n+1}, u_{n+1})``
("right" point, the default scheme) or at ``(X_n, u_n)`` ("left" point,
which coincides with exact reverse-mode differentiation of the sampled
loss).  At ``n = N-1`` the right-point control index is clamped to ``N-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ControlPath, LayerControl, StatePath, drift
from .exceptions import ConfigurationError, PropagationError

__all__ = [
    "LossSpec",
    "AdjointPath",
    "normalize_scheme",
    "terminal_condition",
    "backward_step",
    "z_estimate",
    "solve_adjoint",
]

_SCHEMES = {
    "right": "right",
    "right-point": "right",
    "left": "left",
    "left-point": "left",
}


def normalize_scheme(scheme: str) -> str:
    try:
        return _SCHEMES[str(scheme).lower()]
    except KeyError:
        raise ConfigurationError(
            f"unknown scheme {scheme!r}; expected 'right' or 'left'"
        ) from None


@dataclass(frozen=True)
class LossSpec:
    """Squared Euclidean loss on the first ``label_dim`` state coordinates."""

    label_dim: int
    width: int

    def __post_init__(self):
        if not 1 <= self.label_dim <= self.width:
            raise ConfigurationError(
                f"label_dim must lie in [1, width={self.width}], got {self.label_dim}"
            )

    @property
    def readout(self) -> np.ndarray:
        """The (label_dim, width) coordinate-selector matrix ``R``."""
        return np.eye(self.label_dim, self.width)

    def _check(self, x, gamma):
        x = np.asarray(x, dtype=np.float64)
        gamma = np.asarray(gamma, dtype=np.float64)
        if x.shape[-1] != self.width:
            raise ConfigurationError(f"state has width {x.shape[-1]}, loss expects {self.width}")
        if gamma.shape[-1:] != (self.label_dim,):
            raise ConfigurationError(
                f"label has dimension {gamma.shape[-1:]}, loss expects {self.label_dim}"
            )
        return x, gamma

    def residual(self, x, gamma):
        x, gamma = self._check(x, gamma)
        return x[..., : self.label_dim] - gamma

    def value(self, x, gamma):
        r = self.residual(x, gamma)
        return np.sum(r * r, axis=-1)


@dataclass
class AdjointPath:
    """Adjoint values ``y`` (N+1, D) and martingale estimates ``z`` (N, D)."""

    y: np.ndarray
    z: np.ndarray
    scheme: str = "right"


def terminal_condition(xN, gamma, loss: LossSpec):
    """Gradient of the loss at the output state: ``2 R^T (R x_N - gamma)``."""
    r = loss.residual(xN, gamma)
    out = np.zeros(np.shape(xN))
    out[..., : loss.label_dim] = 2.0 * r
    return out


def backward_step(y_next, x_eval, ctrl: LayerControl, h: float):
    """``y_next + h J^T y_next`` with ``J`` the drift Jacobian at ``x_eval``.

    ``J^T y`` is formed as ``W^T (s (1 - s) y)`` without building ``J``.
    """
    y_next = np.asarray(y_next, dtype=np.float64)
    s = drift(x_eval, ctrl)
    y = y_next + h * ((s * (1.0 - s) * y_next) @ ctrl.W)
    if not np.isfinite(y).all():
        raise PropagationError("backward step produced a non-finite adjoint")
    return y


def z_estimate(y_next, omega, h: float):
    """Single-sample martingale term ``sqrt(h) * y_next * omega / h``."""
    if not h > 0:
        raise ConfigurationError(f"step size h must be positive, got {h}")
    return math.sqrt(h) * (np.asarray(y_next) * np.asarray(omega)) / h


def solve_adjoint(
    path: StatePath,
    controls: ControlPath,
    gamma,
    loss: LossSpec,
    scheme: str = "right",
) -> AdjointPath:
    """Backward sweep along ``path``; returns the (Y, Z) sequences."""
    scheme = normalize_scheme(scheme)
    N, D = controls.depth, controls.width
    if path.states.shape != (N + 1, D) or path.noises.shape != (N, D):
        raise ConfigurationError(
            f"state path of shape {path.states.shape} does not match controls (N={N}, D={D})"
        )
    h = controls.h
    y = np.empty((N + 1, D))
    z = np.empty((N, D))
    y[N] = terminal_condition(path.states[N], gamma, loss)
    for n in range(N - 1, -1, -1):
        if scheme == "right":
            x_eval, ctrl = path.states[n + 1], controls[min(n + 1, N - 1)]
        else:
            x_eval, ctrl = path.states[n], controls[n]
        y[n] = backward_step(y[n + 1], x_eval, ctrl, h)
        z[n] = z_estimate(y[n + 1], path.noises[n], h)
    return AdjointPath(y, z, scheme)
