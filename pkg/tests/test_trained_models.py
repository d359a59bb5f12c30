"""End-to-end outcome checks on the built-in benchmark configurations (seed 0)."""

import numpy as np

from snnsmp.evaluation import predict

from conftest import benchmark


def test_cubic_tail_loss_below_noise_floor():
    _, log, _, _ = benchmark("cubic-regression", 0)
    floor = 2 * 0.2**2 * 1.2
    assert log.tail_mean(0.05) < floor


def test_cubic_output_spread_matches_data_noise():
    controls, _, _, _ = benchmark("cubic-regression", 0)
    std = predict(controls, [0.5], 2000, rng=0).outputs.std()
    assert 0.1 <= std <= 0.4


def test_cubic_band_fits_curve():
    _, _, metrics, _ = benchmark("cubic-regression", 0)
    assert metrics["rmse"] <= 0.1 and metrics["coverage"] >= 0.9


def test_circle_accuracy_outside_band():
    _, _, metrics, _ = benchmark("circle-classification", 0)
    assert metrics["accuracy_outside_band"] >= 0.95


def test_circle_surface_shape():
    _, _, _, artifacts = benchmark("circle-classification", 0)
    centres, surface = artifacts["surface"]
    mid = np.abs(centres) < 0.15
    corner = np.abs(centres) > 0.85
    assert surface[np.ix_(mid, mid)].max() < 0.5
    assert surface[np.ix_(corner, corner)].min() > 0.5
