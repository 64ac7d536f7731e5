import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from levyavg.integrators import SampleSeries, SimConfig, simulate
from levyavg.reduction import l_approx
from levyavg.sde_models import linear_system
from levyavg.stable_noise import StableParams, make_rng, sample_increments
from levyavg.stats import (autocodiff_linear_analytic, autocodifference, bowley_skewness,
                           chi2_quantile, count_modes, empirical_cf, histogram_pdf, ks_distance,
                           plan_sample_size, skewness_parameter, tail_mass, write_af_csv,
                           write_cf_csv, write_density_csv)


@settings(max_examples=50)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=300), st.integers(2, 60))
def test_histogram_normalised(xs, n_bins):
    x = np.array(xs)
    lo, hi = x.min() - 1.0, x.max() + 1.0
    d = histogram_pdf(x, n_bins, (lo, hi))
    assert d.integral() == pytest.approx(1.0, abs=1e-9)


def test_histogram_constant_and_outliers():
    d = histogram_pdf(np.full(100, 0.3), 10, (0, 1))
    assert np.count_nonzero(d.densities) == 1
    assert d.densities.max() == pytest.approx(1 / 0.1)
    d = histogram_pdf(np.array([-5.0, 0.5, 0.6, 7.0]), 4, (0, 1))
    assert (d.n_below, d.n_above, d.n_samples) == (1, 1, 4)
    with pytest.raises(ValueError):
        histogram_pdf(np.array([5.0]), 4, (0, 1))
    with pytest.raises(ValueError):
        histogram_pdf(np.array([0.5]), 4, (1, 0))


@pytest.mark.parametrize("p,dof", [(0.95, 1), (0.9995, 1), (0.5, 3), (0.01, 7)])
def test_chi2_quantile(p, dof):
    assert chi2_quantile(p, dof) == pytest.approx(sps.chi2.ppf(p, dof), rel=1e-9)


def test_plan_examples():
    p = plan_sample_size(1e-5, 1e-5, 100, 0.01, 1.0)
    assert p.M_Z == pytest.approx(12.12, abs=0.01)
    assert p.N_Z == pytest.approx(1.212e6, rel=0.01)
    assert p.N == pytest.approx(1.212e8, rel=0.01)
    assert plan_sample_size(1e-5, 1e-4, 100, 0.01, 1.0).N_Z == pytest.approx(1.212e4, rel=0.01)
    assert plan_sample_size(1e-5, 1e-5, 50, 0.01, 1.0).M_Z < p.M_Z
    with pytest.raises(ValueError):
        plan_sample_size(0.0, 1e-5, 100, 0.01, 1.0)


@given(st.floats(1e-6, 1e-2), st.floats(1e-6, 1e-2), st.floats(1.0, 3.0),
       st.integers(1, 500), st.integers(1, 500))
def test_plan_monotone(pi, omega, shrink, n1, n2):
    base = plan_sample_size(pi, omega, min(n1, n2), 0.01, 1.0)
    assert plan_sample_size(pi, omega / shrink, min(n1, n2), 0.01, 1.0).N_Z >= base.N_Z
    assert plan_sample_size(pi, omega, max(n1, n2), 0.01, 1.0).N_Z >= base.N_Z


def test_empirical_cf_properties(rng):
    x = rng.standard_normal(10 ** 5)
    assert empirical_cf(x, 0.0) == 1
    vals = empirical_cf(x, np.linspace(-3, 3, 13))
    assert np.abs(vals.imag).max() < 3 / math.sqrt(len(x))
    y = rng.standard_normal(1000)
    k = np.linspace(-4, 4, 9)
    assert np.array_equal(empirical_cf(y, k), empirical_cf(rng.permutation(y), k))


def test_af_iid_vanishes():
    x = sample_increments(StableParams(1.7), make_rng(1), 10 ** 6)
    af = autocodifference(SampleSeries(x, 0.01, 0.0, 1), 20)
    assert np.abs(af.values[1:]).max() < 5 * af.stderr[1:].max()
    assert not af.unreliable[1:].any()
    with pytest.raises(ValueError):
        autocodifference(x[:500], 20)


def test_af_analytic_limits():
    a, b, c = 0.2, 0.7, 1.0
    tau = np.linspace(0, 5, 51)
    g = autocodiff_linear_analytic(tau, a, b, c, 2.0)
    r = 1 - a * c
    assert np.allclose(g, (a * b) ** 2 * np.exp(-r * tau) / r)
    assert np.all(autocodiff_linear_analytic(tau, a, b, c, 1.7).imag == 0)
    assert abs(autocodiff_linear_analytic(60.0, a, b, c, 1.7)) < 1e-12
    with pytest.raises(ValueError):
        autocodiff_linear_analytic(tau, 2.0, b, 1.0, 1.7)


def test_af_time_reversal():
    L = l_approx(linear_system(a=0.2, b=0.7, c=1.0, alpha=1.7))
    ser = simulate(L, SimConfig(delta_t=0.01, sample_Dt=0.01, n_samples=400000, seed=3))
    fwd = autocodifference(ser, 100)
    back = autocodifference(ser.values[::-1], 100)
    assert np.allclose(fwd.values.real, back.values.real, atol=5 * fwd.stderr.max())


def test_ks_examples(rng):
    x = rng.standard_normal(10 ** 6)
    assert ks_distance(x, x) == 0
    y = rng.standard_normal(10 ** 6)
    assert ks_distance(x, y) < 0.025
    shift = ks_distance(x, y + 1.0)
    assert shift == pytest.approx(sps.norm.cdf(0.5) - sps.norm.cdf(-0.5), abs=0.02)


def test_ks_on_densities(rng):
    x, y = rng.standard_normal(10 ** 5), rng.standard_normal(10 ** 5) + 0.5
    dx, dy = histogram_pdf(x, 200, (-6, 6)), histogram_pdf(y, 200, (-6, 6))
    assert ks_distance(dx, dy) == pytest.approx(ks_distance(x, y, stride=1), abs=0.01)
    with pytest.raises(ValueError):
        ks_distance(dx, histogram_pdf(y, 100, (-6, 6)))
    with pytest.raises(TypeError):
        ks_distance(dx, y)


def test_modes_and_tails(rng):
    two = np.concatenate([rng.normal(-2, 0.5, 10 ** 5), rng.normal(2, 0.5, 10 ** 5)])
    assert count_modes(two) == 2
    assert count_modes(rng.standard_normal(2 * 10 ** 5)) == 1
    assert tail_mass(np.array([-3.0, 0.0, 1.0, 2.5]), 2.0) == 0.5


@pytest.mark.parametrize("beta", [-0.6, 0.5])
def test_skewness_sign(beta):
    x = sample_increments(StableParams(1.7, beta, 0.5), make_rng(2), 10 ** 6) + 0.3
    assert skewness_parameter(x, 1.7) == pytest.approx(beta, abs=0.05)
    assert np.sign(bowley_skewness(x)) == -np.sign(beta)


def test_csv_writers(tmp_path):
    d = histogram_pdf(np.array([0.1, 0.2, 0.7]), 2, (0, 1))
    write_density_csv(d, tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "bin_center,density"
    x = sample_increments(StableParams(1.9), make_rng(3), 5000)
    write_af_csv(autocodifference(x, 3), tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "lag,re,im"
    write_cf_csv([0.0, 1.0], empirical_cf(x, [0.0, 1.0]), tmp_path / "c.csv")
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "k,re,im" and rows[1].startswith("0,1,0")
