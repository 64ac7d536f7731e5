import math

import numpy as np
import pytest

from levyavg.asymptotics import (CfContext, cf_integral_asymptotic, cf_integral_quadrature,
                                 convergence_slope, gamma_fn, lambda_fn, phi_v_cf, psi_v_cf)
from levyavg.integrators import SimConfig, simulate
from levyavg.sde_models import FastSlowSystem, PolyAbs
from levyavg.stable_noise import xi
from levyavg.stats import empirical_cf

ALPHA = 1.7
GAMMA = 1 - 1 / ALPHA


def ctx(**kw):
    base = dict(l=0.8, m=-1.3, f2v=0.6, g2v=-1.2, g1v=0.4, epsilon=1e-2, gamma=GAMMA, b=0.7,
                alpha=ALPHA, beta=0.4)
    base.update(kw)
    return CfContext(**base)


def test_context_checks():
    with pytest.raises(ValueError):
        ctx(g2v=0.5)
    with pytest.raises(ValueError):
        ctx(epsilon=0.0)
    with pytest.raises(ValueError):
        ctx(alpha=1.0)


def test_kernel_limits():
    c = ctx()
    q = c.epsilon ** (1 - GAMMA) * c.m
    assert lambda_fn(0.0, c) == pytest.approx(c.l)
    assert gamma_fn(0.0, c) == pytest.approx(c.l)
    assert lambda_fn(50.0, c) == pytest.approx(-q * c.f2v / c.g2v)
    assert gamma_fn(50.0, c) == pytest.approx(-q)
    c0 = ctx(m=0.0)
    assert lambda_fn(0.01, c0) == pytest.approx(c0.l * math.exp(c0.g2v * 0.01 / c0.epsilon))


def test_quadrature_trivial_cases():
    assert cf_integral_quadrature(0.0, "lambda", ctx()) == 0
    with pytest.raises(ValueError):
        cf_integral_quadrature(-1.0, "lambda", ctx())
    with pytest.raises(ValueError):
        cf_integral_quadrature(1.0, "delta", ctx())


@pytest.mark.parametrize("kernel", ["lambda", "gamma"])
@pytest.mark.parametrize("regime", ["t_order_one", "t_order_eps"])
@pytest.mark.parametrize("t", [1e-3, 0.05, 1.0, 3.0])
def test_m_zero_exact(kernel, regime, t):
    c = ctx(m=0.0, epsilon=3e-3)
    closed = (c.epsilon * abs(c.l) ** ALPHA / (-ALPHA * c.g2v) * xi(c.l, ALPHA, c.beta)
              * (1 - math.exp(ALPHA * c.g2v * t / c.epsilon)))
    quad = cf_integral_quadrature(t, kernel, c)
    assert abs(quad - closed) < 1e-10
    assert abs(cf_integral_asymptotic(t, regime, kernel, c) - quad) < 1e-10


def test_regression_fixture():
    # frozen quadrature values at eps = 1e-3
    c = ctx(epsilon=1e-3)
    lam = cf_integral_quadrature(1.0, "lambda", c)
    gam = cf_integral_quadrature(1.0, "gamma", c)
    assert lam == pytest.approx(LAMBDA_FIXTURE, rel=1e-10)
    assert gam == pytest.approx(GAMMA_FIXTURE, rel=1e-10)


LAMBDA_FIXTURE = 0.0008037733898801165 + 3.1237181205777935e-05j
GAMMA_FIXTURE = 0.0019153539976569385 - 0.0003903686426388411j


@pytest.mark.parametrize("kernel", ["lambda", "gamma"])
def test_relative_error_order(kernel):
    eps = [1e-3, 1e-4]
    errs = []
    for e in eps:
        c = ctx(epsilon=e)
        q = cf_integral_quadrature(1.0, kernel, c)
        errs.append(abs(cf_integral_asymptotic(1.0, "t_order_one", kernel, c) - q) / abs(q))
    assert errs[0] / errs[1] == pytest.approx(10 ** (1 / ALPHA), rel=0.15)


def test_remainder_improves_accuracy():
    c = ctx(epsilon=1e-3)
    q = cf_integral_quadrature(1.0, "lambda", c)
    lead = abs(cf_integral_asymptotic(1.0, "t_order_one", "lambda", c) - q)
    corr = abs(cf_integral_asymptotic(1.0, "t_order_one", "lambda", c, remainder=True) - q)
    assert corr < lead / 5


def test_t_order_eps_regime():
    for e in (1e-2, 1e-3):
        c = ctx(epsilon=e)
        q = cf_integral_quadrature(e, "lambda", c)
        a = cf_integral_asymptotic(e, "t_order_eps", "lambda", c)
        assert abs(a - q) < 5 * e ** (2 - GAMMA)


def test_convergence_slope():
    eps = np.array([1e-1, 1e-2, 1e-3])
    assert convergence_slope(eps, 3 * eps ** 0.6) == pytest.approx(0.6)


def test_v_cfs_basic():
    c = ctx(beta=0.0)
    assert psi_v_cf(0.0, 1.0, c) == 1
    assert phi_v_cf(0.0, 1.0, c) == 1
    m = np.linspace(-3, 3, 13)
    scale = c.epsilon ** (GAMMA - 1 + 1 / ALPHA) * c.b * abs(c.f2v / c.g2v)
    assert np.allclose(np.abs(psi_v_cf(m, 2.0, c)), np.exp(-scale ** ALPHA * np.abs(m) ** ALPHA
                                                          * 2.0))
    assert np.all(np.abs(psi_v_cf(m, 1.0, ctx())) <= 1 + 1e-15)
    unit = ctx(beta=0.0, f2v=1.2, g2v=-1.2, g1v=0.4 * -1.2 / 1.2 * -1.0)
    assert np.allclose(np.abs(phi_v_cf(m, 1.0, unit)), np.abs(psi_v_cf(m, 1.0, unit)))


def test_psi_v_monte_carlo():
    # with the slow variable frozen at 0 and f1 = 0, x_t is the integrated forcing v_t
    a, b, eps = 0.2, 0.7, 1e-2
    s = FastSlowSystem(PolyAbs(0), PolyAbs(a), PolyAbs(0), PolyAbs(-1), eps, GAMMA, b, ALPHA)
    cfg = SimConfig(delta_t=1e-3, sample_Dt=1.0, n_samples=20000, seed=6, n_chunks=4,
                    burn_in=1.0)
    x = simulate(s, cfg)
    inc = np.concatenate([np.diff(c) for c in x.chunks()])
    m = np.linspace(-3, 3, 25)
    c = CfContext(l=0.0, m=0.0, f2v=a, g2v=-1.0, g1v=0.0, epsilon=eps, gamma=GAMMA, b=b,
                  alpha=ALPHA)
    err = np.abs(empirical_cf(inc, m) - psi_v_cf(m, 1.0, c))
    assert err.max() < 0.02 + 3 / math.sqrt(len(inc))
