import numpy as np
import pytest
from scipy import stats as sps

from nodefrag.sampler import RngStream
from nodefrag.stats import (McEstimate, chi_square, ks_statistic, ks_two_sample, mc_mean,
                            ratio_estimate, through_origin_slope, weighted_ks_two_sample)


def test_mc_estimate_invariants():
    with pytest.raises(ValueError):
        McEstimate(0.0, -1.0, 1)
    with pytest.raises(ValueError):
        McEstimate(0.0, 1.0, 0)
    e = mc_mean([1.0, 2.0, 3.0])
    assert e.mean == 2.0 and e.std_error == pytest.approx(1 / np.sqrt(3))
    assert e.scaled(-2).std_error == pytest.approx(2 / np.sqrt(3))


def test_ks_identical_and_disjoint():
    x = np.linspace(0, 1, 50)
    assert ks_statistic(x, x) == 0.0 and ks_two_sample(x, x) == pytest.approx(1.0)
    assert ks_statistic(x, x + 2) == 1.0


def test_ks_small_samples_exact():
    x, y = np.arange(10.0), np.arange(10.0) + 0.5
    assert ks_two_sample(x, y) == pytest.approx(sps.ks_2samp(x, y, method="exact").pvalue)


def test_ks_calibration():
    g = RngStream(41).gen
    p = [ks_two_sample(g.random(10_000), g.random(10_000)) for _ in range(200)]
    assert abs(np.mean(p) - 0.5) <= 0.05


def test_weighted_ks_unit_weights_match_plain():
    g = RngStream(42).gen
    x, y = g.random(500), g.random(700)
    d, p, ne = weighted_ks_two_sample(x, y, np.ones(500), np.ones(700))
    ref = sps.ks_2samp(x, y)
    assert d == pytest.approx(ref.statistic)
    assert ne == pytest.approx(500 * 700 / 1200)


def test_weighted_ks_detects_reweighting():
    g = RngStream(43).gen
    # exponential reweighting of Exp(1) by e^{x/2} gives Exp(1/2)
    x, y = g.exponential(2.0, 3000), g.exponential(1.0, 20_000)
    ok = weighted_ks_two_sample(x, y, None, np.exp(0.5 * y))[1]
    bad = weighted_ks_two_sample(x, y)[1]
    assert ok > 0.01 and bad < 1e-6


def test_chi_square():
    stat, p = chi_square([10, 10, 10], [1, 1, 1])
    assert stat == 0.0 and p == pytest.approx(1.0)
    with pytest.raises(ValueError):
        chi_square([1, 2], [1, 0])
    stat2, p2 = chi_square([50, 10], [30, 30], normalize=False)
    assert stat2 == pytest.approx(800 / 30) and p2 == pytest.approx(sps.chi2.sf(800 / 30, 2))


def test_ratio_and_slope():
    g = RngStream(44).gen
    x = g.exponential(1.0, 50_000)
    y = 2.5 * x + g.normal(0, 1, x.size) * x
    s = through_origin_slope(x, y)
    assert abs(s.mean - 2.5) <= 3 * s.std_error
    r = ratio_estimate(y, x)
    assert abs(r.mean - 2.5) <= 3 * r.std_error
