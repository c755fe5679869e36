"""Mask distributions, density scaling, and the k / P weighting quantities."""

import numpy as np
import pytest

from kslab.errors import ConfigError, ValidationError
from kslab.rng import stream
from kslab.sampling import (
    MaskDistribution,
    build_density,
    compute_P,
    compute_k,
    draw_mask,
    validate_mask_conditions,
)


def test_density_no_acceleration():
    dist = MaskDistribution("column_polynomial", 16, 1.0, 2)
    assert np.array_equal(build_density(dist), np.ones(16))


def test_density_accel_target():
    dist = MaskDistribution("column_polynomial", 32, 4.0, 4)
    probs = build_density(dist)
    assert abs(probs.sum() - 8.0) <= 0.08
    assert np.all(probs > 0) and np.all(probs <= 1)


def test_density_center_always_one():
    for accel in (1.5, 3.0, 8.0):
        dist = MaskDistribution("column_polynomial", 32, accel, 4)
        probs = build_density(dist)
        center = np.argsort(np.abs(np.arange(32) - 15.5), kind="stable")[:4]
        assert np.all(probs[center] == 1.0)


def test_density_unattainable_accel():
    with pytest.raises(ConfigError):
        MaskDistribution("column_polynomial", 16, 10.0, 4)


def test_density_2d_bernoulli():
    dist = MaskDistribution("bernoulli2d_polynomial", 64, 3.0, 4, shape=(8, 8))
    probs = build_density(dist)
    assert probs.shape == (64,)
    assert abs(64 / probs.sum() - 3.0) <= 0.03


def test_column_kind_2d_broadcasts_columns():
    dist = MaskDistribution("column_polynomial", 24, 2.0, 2, shape=(4, 6))
    mask = dist.draw(stream(0, "draw"))
    grid = np.asarray(mask.member).reshape(4, 6)
    assert np.all(grid == grid[0])  # each column fully on or off
    probs = np.asarray(mask.probs).reshape(4, 6)
    assert np.all(probs == probs[0])


def test_draw_mask_full_probs():
    mask = draw_mask(np.ones(8), stream(1, "d"))
    assert mask.indices == tuple(range(8))


def test_draw_mask_determinism():
    probs = build_density(MaskDistribution("column_polynomial", 16, 2.0, 2))
    a = draw_mask(probs, stream(42, "mask"))
    b = draw_mask(probs, stream(42, "mask"))
    assert a.indices == b.indices


def test_draw_mask_empirical_frequency():
    probs = build_density(MaskDistribution("column_polynomial", 24, 3.0, 2))
    rng = stream(7, "freq")
    n = 100_000
    hits = (rng.random((n, 24)) < probs).mean(axis=0)
    assert np.abs(hits - probs).max() <= 0.01


def test_distribution_empirical_acceleration():
    dist = MaskDistribution("column_polynomial", 32, 4.0, 2)
    rng = stream(3, "accel")
    sizes = [dist.draw(rng).size for _ in range(10_000)]
    got = 32 / np.mean(sizes)
    assert abs(got - 4.0) <= 0.08


def test_compute_k_examples():
    assert compute_k([1.0], [0.7])[0] == 0.0
    assert np.isclose(compute_k([0.5], [0.5])[0], 2.0 / 3.0)
    assert np.isclose(compute_k([0.3], [0.0])[0], 0.7)


def test_compute_k_range():
    rng = stream(5, "k")
    for _ in range(200):
        p = rng.uniform(0.01, 1.0, 8)
        pt = rng.uniform(0.0, 0.99, 8)
        k = compute_k(p, pt)
        assert np.all(k >= 0.0) and np.all(k < 1.0)


def test_compute_k_precondition_errors():
    with pytest.raises(ValidationError, match="p must be positive"):
        compute_k([0.0, 0.5], [0.2, 0.2])
    with pytest.raises(ValidationError, match="index 1"):
        compute_k([1.0, 0.5], [1.0, 1.0])


def test_compute_P_examples():
    assert np.isclose(compute_P([1.0], [0.5])[0], 1.0)
    assert np.isclose(compute_P([0.5], [0.5])[0], 3.0)
    # weight defined as 1 where the loss never uses it
    assert compute_P([1.0], [1.0])[0] == 1.0


def test_P_times_one_minus_k_identity():
    rng = stream(11, "pk")
    for _ in range(100):
        q = int(rng.integers(1, 12))
        p = rng.uniform(0.05, 1.0, q)
        pt = rng.uniform(0.0, 0.95, q)
        ident = compute_P(p, pt) * (1.0 - compute_k(p, pt))
        assert np.abs(ident - 1.0).max() <= 1e-12


def test_validate_mask_conditions_passes_center():
    # p = 1 at the center permits ptilde = 1 there
    validate_mask_conditions([1.0, 0.5], [1.0, 0.5])


def test_mask_distribution_rejects_bad_kind():
    with pytest.raises(ConfigError):
        MaskDistribution("poisson_disc", 8, 2.0, 2)


def test_draw_mask_rejects_zero_prob():
    with pytest.raises(ValidationError):
        draw_mask([0.0, 0.5], stream(0, "z"))
