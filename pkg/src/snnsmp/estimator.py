"""scikit-learn compatible wrappers around the SGD trainer.

:class:`SNNRegressor` and :class:`SNNClassifier` follow the usual
``fit``/``predict`` protocol; the stochastic network is exposed through
:meth:`SNNRegressor.sample` and :meth:`SNNRegressor.predict_interval`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dynamics import NetConfig
from .evaluation import simulate_outputs
from .exceptions import ConfigurationError
from .streams import philox
from .tasks import Dataset
from .trainer import TrainConfig, init_controls, train

__all__ = ["SNNRegressor", "SNNClassifier"]

_INIT, _PREDICT = 2, 4


class _SNNBase(BaseEstimator):
    def __init__(
        self,
        width=3,
        depth=8,
        h=1.0,
        n_iter=10_000,
        lr_scale=1.0,
        scheme="right",
        train_sigma=True,
        n_samples=200,
        random_state=0,
    ):
        self.width = width
        self.depth = depth
        self.h = h
        self.n_iter = n_iter
        self.lr_scale = lr_scale
        self.scheme = scheme
        self.train_sigma = train_sigma
        self.n_samples = n_samples
        self.random_state = random_state

    def _seed(self) -> int:
        if self.random_state is None:
            return 0
        if not isinstance(self.random_state, (int, np.integer)) or self.random_state < 0:
            raise ConfigurationError(f"random_state must be a non-negative int, got {self.random_state!r}")
        return int(self.random_state)

    def _fit(self, X, Y):
        if X.shape[1] > self.width or Y.shape[1] > self.width:
            raise ConfigurationError(
                f"width {self.width} cannot hold {X.shape[1]} features and {Y.shape[1]} targets"
            )
        seed = self._seed()
        net = NetConfig(self.width, self.depth, self.h, X.shape[1], Y.shape[1])
        cfg = TrainConfig(
            K=self.n_iter, lr_scale=self.lr_scale, seed=seed, scheme=self.scheme, train_sigma=self.train_sigma
        )
        init = init_controls(net, philox(seed, _INIT))
        self.controls_, self.log_ = train(Dataset(X, Y), net, cfg, init)
        self.net_ = net
        self.n_features_in_ = X.shape[1]
        return self

    def _check_X(self, X):
        check_is_fitted(self, "controls_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, but {type(self).__name__} is expecting {self.n_features_in_}")
        return X

    def _draw(self, X, n_samples):
        """Readouts of shape (n_rows, n_samples, label_dim) with a fixed prediction stream."""
        S = int(self.n_samples if n_samples is None else n_samples)
        if S < 1:
            raise ConfigurationError(f"n_samples must be >= 1, got {S}")
        rng = philox(self._seed(), _PREDICT)
        c = self.controls_
        noises = rng.standard_normal((X.shape[0] * S, c.depth, c.width))
        out = simulate_outputs(c, np.repeat(X, S, axis=0), noises, self.net_.label_dim)
        return out.reshape(X.shape[0], S, -1)


class SNNRegressor(RegressorMixin, _SNNBase):
    """Stochastic residual network regressor trained by single-sample SGD.

    ``predict`` returns the mean of ``n_samples`` noisy forward passes.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, multi_output=True, y_numeric=True)
        self._single_target = y.ndim == 1
        return self._fit(X, y.reshape(len(y), -1))

    def sample(self, X, n_samples=None):
        """Draw network outputs, shape (n_rows, n_samples) or (n_rows, n_samples, n_targets)."""
        out = self._draw(self._check_X(X), n_samples)
        return out[..., 0] if self._single_target else out

    def predict(self, X):
        return self.sample(X).mean(axis=1)

    def predict_interval(self, X, level=0.95, n_samples=None):
        """Empirical central ``level`` interval of the sampled outputs: ``(lower, upper)``."""
        if not 0.0 < level < 1.0:
            raise ConfigurationError(f"level must lie in (0, 1), got {level}")
        draws = self.sample(X, n_samples)
        tail = 100.0 * (1.0 - level) / 2.0
        return np.percentile(draws, tail, axis=1), np.percentile(draws, 100.0 - tail, axis=1)


class SNNClassifier(ClassifierMixin, _SNNBase):
    """Binary classifier: labels are encoded as weights 0 and 1, outputs thresholded at 0.5.

    ``predict_proba`` is the share of ``n_samples`` sampled outputs above the
    threshold; ``predict`` thresholds that share at one half.
    """

    def __init__(
        self,
        width=2,
        depth=8,
        h=1.0,
        n_iter=10_000,
        lr_scale=1.0,
        scheme="right",
        train_sigma=True,
        n_samples=1,
        random_state=0,
        threshold=0.5,
    ):
        super().__init__(width, depth, h, n_iter, lr_scale, scheme, train_sigma, n_samples, random_state)
        self.threshold = threshold

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] != 2:
            raise ValueError(f"SNNClassifier handles two classes, got {self.classes_.shape[0]}")
        return self._fit(X, encoded.astype(np.float64)[:, None])

    def decision_function(self, X):
        """Mean sampled output (the classification weight)."""
        return self._draw(self._check_X(X), None)[..., 0].mean(axis=1)

    def predict_proba(self, X):
        votes = self._draw(self._check_X(X), None)[..., 0] > self.threshold
        p1 = votes.mean(axis=1)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return self.classes_[(self.predict_proba(X)[:, 1] > 0.5).astype(int)]
