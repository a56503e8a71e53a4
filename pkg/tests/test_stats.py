import math

import numpy as np
import pytest
from scipy import stats as sp

from coagsim import stats


@pytest.mark.parametrize("dof", [1, 2, 5, 30, 399, 2000])
def test_chi2_against_scipy(dof):
    for p in (0.005, 0.1, 0.5, 0.9, 0.995):
        assert stats.chi2_ppf(p, dof) == pytest.approx(sp.chi2.ppf(p, dof), rel=1e-9)
    for x in (0.01, 0.5 * dof, dof, 2.0 * dof + 10):
        assert stats.chi2_cdf(x, dof) == pytest.approx(sp.chi2.cdf(x, dof), abs=1e-12)


def test_gamma_p_edges():
    assert stats.gamma_p(2.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        stats.gamma_p(0.0, 1.0)
    with pytest.raises(ValueError):
        stats.chi2_ppf(1.0, 3)


def test_normal_against_scipy():
    x = np.linspace(-5, 5, 41)
    assert np.allclose(stats.normal_cdf(x), sp.norm.cdf(x), rtol=0, atol=1e-14)
    assert stats.normal_cdf(1.0, 1.0, 2.0) == 0.5
    assert stats.normal_ppf(0.975) == pytest.approx(sp.norm.ppf(0.975), rel=1e-12)


def test_ks_examples():
    cdf = lambda t: stats.normal_cdf(t)
    assert stats.ks_statistic(np.zeros(10), cdf) == pytest.approx(0.5)
    s = np.random.default_rng(0).standard_normal(50)
    assert stats.ks_two_sample(s, s) == 0.0
    with pytest.raises(ValueError):
        stats.ks_statistic(np.array([]), cdf)
    with pytest.raises(ValueError):
        stats.ks_two_sample(np.array([]), s)


def test_ks_self_test():
    x = np.random.default_rng(1).standard_normal(10_000)
    d = stats.ks_statistic(x, stats.normal_cdf)
    assert d <= 1.63 / math.sqrt(x.size)
    assert d == pytest.approx(sp.kstest(x, "norm").statistic, abs=1e-12)


def test_ks_two_sample_against_scipy():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal(300), rng.standard_normal(500) + 0.2
    assert stats.ks_two_sample(a, b) == pytest.approx(sp.ks_2samp(a, b).statistic, abs=1e-12)


def test_ks_censored():
    # samples beyond the censoring time only count through the tail mass
    rng = np.random.default_rng(3)
    x = rng.exponential(size=5000)
    cdf = lambda t: 1.0 - np.exp(-np.asarray(t))
    censored = np.where(x <= 2.0, x, np.inf)
    d = stats.ks_statistic(censored, cdf, censor=2.0)
    assert d <= stats.ks_statistic(x, cdf) + 1e-12
    assert stats.ks_statistic(np.full(10, np.inf), cdf, censor=2.0) == pytest.approx(cdf(2.0))


def test_ks_critical():
    assert stats.ks_critical(400) == pytest.approx(1.6276 / 20, rel=1e-3)


def test_variance_band_and_ci():
    band = stats.variance_band(2.0, 400)
    assert band.lower == pytest.approx(2.0 * sp.chi2.ppf(0.005, 399) / 399, rel=1e-9)
    assert band.upper == pytest.approx(2.0 * sp.chi2.ppf(0.995, 399) / 399, rel=1e-9)
    assert band.contains(2.0) and not band.contains(3.0)
    ci = stats.variance_ci(np.random.default_rng(4).normal(0, 3, 2000))
    assert ci.contains(9.0)
    with pytest.raises(ValueError):
        stats.variance_band(1.0, 1)
    with pytest.raises(ValueError):
        stats.variance_ci([1.0])


def test_proportion_and_trend():
    assert stats.proportion(3, 4) == (0.75, pytest.approx(math.sqrt(0.75 * 0.25 / 4)))
    with pytest.raises(ValueError):
        stats.proportion(0, 0)
    assert stats.is_nondecreasing([0.1, 0.1, 0.5])
    assert not stats.is_nondecreasing([0.2, 0.1])
