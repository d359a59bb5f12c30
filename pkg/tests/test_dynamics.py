import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from snnsmp.dynamics import (
    ControlPath,
    LayerControl,
    NetConfig,
    diffusion_gradient,
    drift,
    drift_jacobian_state,
    drift_param_gradient,
    embed_input,
    forward_step,
    sigmoid,
    simulate_path,
)
from snnsmp.exceptions import ConfigurationError, PropagationError

from conftest import random_controls

finite = st.floats(-30, 30, allow_nan=False)


def layer(W, b, sigma=None):
    W = np.atleast_2d(np.asarray(W, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return LayerControl(W, b, np.zeros_like(b) if sigma is None else np.atleast_1d(np.asarray(sigma, dtype=float)))


class TestSigmoid:
    def test_origin(self):
        assert np.array_equal(sigmoid(np.zeros(3)), np.full(3, 0.5))

    def test_reflection(self):
        z = np.array([1.7, -0.3])
        np.testing.assert_allclose(sigmoid(z) + sigmoid(-z), 1.0, rtol=0, atol=1e-15)

    def test_frozen_value_at_two(self):
        # 1/(1+e^-2) evaluated at 50 digits, rounded to double
        assert sigmoid(2.0) == pytest.approx(0.8807970779778823, abs=1e-16)

    def test_saturation_is_finite(self):
        out = sigmoid(np.array([-800.0, 800.0]))
        assert np.isfinite(out).all() and out[0] >= 0.0 and out[1] <= 1.0

    @given(arrays(np.float64, 5, elements=finite))
    def test_open_unit_interval(self, z):
        s = sigmoid(z)
        assert ((s > 0) & (s < 1)).all()


class TestDrift:
    def test_zero_parameters(self):
        assert np.array_equal(drift(np.array([3.0, -1.0]), layer(np.zeros((2, 2)), np.zeros(2))), [0.5, 0.5])

    def test_identity_weights_at_origin(self):
        assert np.array_equal(drift(np.zeros(3), layer(np.eye(3), np.zeros(3))), np.full(3, 0.5))

    def test_matches_scalar_evaluation(self):
        rng = np.random.default_rng(11)
        W, b, x = rng.standard_normal((3, 3)), rng.standard_normal(3), rng.standard_normal(3)
        ref = [1.0 / (1.0 + math.exp(-(sum(W[i, j] * x[j] for j in range(3)) + b[i]))) for i in range(3)]
        np.testing.assert_allclose(drift(x, layer(W, b)), ref, rtol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            drift(np.zeros(3), layer(np.zeros((2, 2)), np.zeros(2)))

    def test_batch_broadcast(self):
        rng = np.random.default_rng(2)
        c = layer(rng.standard_normal((2, 2)), rng.standard_normal(2))
        xs = rng.standard_normal((5, 2))
        np.testing.assert_array_equal(drift(xs, c), np.stack([drift(x, c) for x in xs]))


class TestJacobian:
    def test_zero_weights(self):
        assert not drift_jacobian_state(np.ones(2), layer(np.zeros((2, 2)), np.ones(2))).any()

    def test_scalar_slope(self):
        assert drift_jacobian_state(np.zeros(1), layer([[1.0]], [0.0]))[0, 0] == 0.25

    def test_finite_differences(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            D = int(rng.integers(1, 5))
            c = layer(rng.standard_normal((D, D)), rng.standard_normal(D))
            x = rng.standard_normal(D)
            J = drift_jacobian_state(x, c)
            for j in range(D):
                e = np.zeros(D)
                e[j] = 1e-5
                fd = (drift(x + e, c) - drift(x - e, c)) / 2e-5
                np.testing.assert_allclose(J[:, j], fd, atol=1e-6, rtol=0)


class TestParamGradient:
    def test_zero_adjoint(self):
        gW, gb = drift_param_gradient(np.ones(2), layer(np.eye(2), np.ones(2)), np.zeros(2))
        assert not gW.any() and not gb.any()

    def test_zero_state_kills_weights(self):
        gW, gb = drift_param_gradient(np.zeros(2), layer(np.eye(2), np.ones(2)), np.array([1.0, -2.0]))
        assert not gW.any() and gb.any()

    def test_finite_differences(self):
        rng = np.random.default_rng(4)
        D = 3
        W, b, x, y = rng.standard_normal((D, D)), rng.standard_normal(D), rng.standard_normal(D), rng.standard_normal(D)
        gW, gb = drift_param_gradient(x, layer(W, b), y)
        for idx in np.ndindex(W.shape):
            Wp, Wm = W.copy(), W.copy()
            Wp[idx] += 1e-5
            Wm[idx] -= 1e-5
            fd = (y @ drift(x, layer(Wp, b)) - y @ drift(x, layer(Wm, b))) / 2e-5
            assert abs(gW[idx] - fd) < 1e-6
        for i in range(D):
            bp, bm = b.copy(), b.copy()
            bp[i] += 1e-5
            bm[i] -= 1e-5
            fd = (y @ drift(x, layer(W, bp)) - y @ drift(x, layer(W, bm))) / 2e-5
            assert abs(gb[i] - fd) < 1e-6


class TestDiffusionGradient:
    @given(arrays(np.float64, 4, elements=finite))
    def test_identity(self, z):
        assert np.array_equal(diffusion_gradient(z), z)

    def test_returns_copy(self):
        z = np.array([1.0, 0.0])
        out = diffusion_gradient(z)
        out[0] = 5.0
        assert z[0] == 1.0


class TestForwardStep:
    def test_pure_drift(self):
        assert np.array_equal(forward_step(np.zeros(2), layer(np.zeros((2, 2)), np.zeros(2)), np.ones(2), 1.0), [0.5, 0.5])

    def test_hand_value(self):
        out = forward_step(np.zeros(1), layer([[0.0]], [0.0], [0.01]), np.ones(1), 1.0)
        assert out[0] == pytest.approx(0.51, abs=1e-15)

    def test_zero_noise_is_residual_update(self):
        rng = np.random.default_rng(1)
        c = layer(rng.standard_normal((2, 2)), rng.standard_normal(2), [0.3, 0.7])
        x = rng.standard_normal(2)
        np.testing.assert_array_equal(forward_step(x, c, np.zeros(2), 0.25), x + 0.25 * drift(x, c))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_raises(self):
        with pytest.raises(PropagationError):
            forward_step(np.array([np.inf]), layer([[0.0]], [0.0]), np.zeros(1), 1.0)

    def test_rejects_bad_step(self):
        with pytest.raises(ConfigurationError):
            forward_step(np.zeros(1), layer([[0.0]], [0.0]), np.zeros(1), 0.0)


class TestSimulatePath:
    def test_two_layers_by_hand(self):
        c = ControlPath(np.zeros((2, 1, 1)), np.zeros((2, 1)), np.zeros((2, 1)), 1.0)
        path = simulate_path(np.zeros(1), c, rng=5)
        np.testing.assert_array_equal(path.states[:, 0], [0.0, 0.5, 1.0])

    def test_deterministic_without_diffusion(self):
        c = random_controls(3, 4, sigma=0.0)
        a = simulate_path(np.array([0.2]), c, rng=1)
        b = simulate_path(np.array([0.2]), c, rng=2)
        np.testing.assert_array_equal(a.states, b.states)

    def test_seeded_replay(self):
        c = random_controls(3, 4)
        a = simulate_path(np.array([0.2, 0.1]), c, rng=7)
        b = simulate_path(np.array([0.2, 0.1]), c, rng=7)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.noises, b.noises)

    def test_states_replay_from_noises(self):
        c = random_controls(3, 5, h=0.3)
        p = simulate_path(np.array([0.4]), c, rng=3)
        for n in range(c.depth):
            np.testing.assert_array_equal(p.states[n + 1], forward_step(p.states[n], c[n], p.noises[n], c.h))

    def test_embedding_pads_with_zeros(self):
        np.testing.assert_array_equal(embed_input(np.array([1.0, 2.0]), 4), [1.0, 2.0, 0.0, 0.0])
        with pytest.raises(ConfigurationError):
            embed_input(np.ones(3), 2)


class TestContainers:
    def test_net_config_validation(self):
        with pytest.raises(ConfigurationError):
            NetConfig(2, 3, input_dim=3)
        with pytest.raises(ConfigurationError):
            NetConfig(0, 3)
        with pytest.raises(ConfigurationError):
            NetConfig(2, 3, h=-1.0)
        assert NetConfig(2, 8, 0.5).horizon == 4.0

    def test_control_path_round_trip(self):
        c = random_controls(3, 4, h=0.5)
        assert ControlPath.from_dict(c.to_dict()) == c
        assert ControlPath.from_layers(c.layers, c.h) == c

    def test_control_path_rejects_nan(self):
        W = np.zeros((2, 2, 2))
        W[0, 0, 0] = np.nan
        with pytest.raises(PropagationError):
            ControlPath(W, np.zeros((2, 2)), np.zeros((2, 2)))

    def test_conformance(self):
        c = random_controls(2, 3, h=0.5)
        assert c.conforms_to(NetConfig(2, 3, 0.5))
        assert not c.conforms_to(NetConfig(2, 4, 0.5))
        with pytest.raises(ConfigurationError):
            c.check(NetConfig(3, 3, 0.5))
