import numpy as np
import pytest
from scipy import stats

from edpnct.metrics import MetricBundle, mae, pearson_corr


def test_mae_examples():
    assert mae(100.0, 100.0) == 0
    assert mae(100.0, 110.0) == pytest.approx(0.1)
    assert mae(100.0, 90.0) == pytest.approx(0.1)
    assert mae(-50.0, -25.0) == pytest.approx(0.5)


def test_mae_undefined_for_zero_total():
    with pytest.raises(ValueError, match="undefined relative error"):
        mae(0.0, 1.0)


def test_mae_homogeneous():
    gen = np.random.default_rng(0)
    for a, b, k in gen.uniform(0.1, 100, size=(100, 3)):
        assert mae(k * a, k * b) == pytest.approx(mae(a, b), rel=1e-12)


def test_pearson_matches_scipy():
    gen = np.random.default_rng(1)
    for _ in range(50):
        a = gen.normal(size=60)
        b = 0.5 * a + gen.normal(size=60)
        assert pearson_corr(a, b) == pytest.approx(stats.pearsonr(a, b)[0], abs=1e-12)


def test_pearson_perfect_and_anti():
    a = np.arange(10.0)
    assert pearson_corr(a, 3 * a + 1) == pytest.approx(1.0)
    assert pearson_corr(a, -a) == pytest.approx(-1.0)


def test_pearson_scale_invariant():
    gen = np.random.default_rng(2)
    a, b = gen.normal(size=(2, 100))
    base = pearson_corr(a, b)
    # includes the (2P+1)/P factor separating the two moving-average divisors
    for scale, shift in [(3 / 1, 0.0), (143 / 71, 0.0), (0.01, 3.0), (7.5, -2.0), (1e3, 1e3)]:
        assert abs(pearson_corr(scale * a + shift, b) - base) < 1e-12


def test_pearson_independent_noise_near_zero():
    gen = np.random.default_rng(3)
    a, b = gen.normal(size=(2, 100_000))
    assert abs(pearson_corr(a, b)) < 0.05


def test_pearson_degenerate():
    with pytest.raises(ValueError, match="degenerate series"):
        pearson_corr(np.ones(5), np.arange(5.0))
    with pytest.raises(ValueError):
        pearson_corr([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        pearson_corr([1.0], [2.0])


def test_bundle_average_and_round_trip():
    runs = [
        {"mae_energy": 0.1, "mae_bill": 0.2, "corr_masked_vs_original": 0.5, "leak_fraction": 0.0},
        {"mae_energy": 0.3, "mae_bill": 0.4, "corr_masked_vs_original": -0.1, "leak_fraction": 0.2},
    ]
    b = MetricBundle.average(runs)
    assert b.mae_energy == pytest.approx(0.2)
    assert b.corr_masked_vs_original == pytest.approx(0.2)
    assert b.leak_fraction == pytest.approx(0.1)
    assert MetricBundle.from_dict(b.to_dict()) == b
    with pytest.raises(ValueError):
        MetricBundle.average([])
    with pytest.raises(ValueError):
        MetricBundle(-1.0, 0.0, 0.0, 0.0)
