import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from levyavg.sde_models import (FastSlowSystem, PolyAbs, ScalarSDE, beta_star, derivative, f_bar,
                                f_bar_derivative, linear_system, nonlinear_system_1,
                                nonlinear_system_2, nonlinear_system_3, rho, validate)

XS = np.random.default_rng(0).uniform(-5, 5, 100)
coef = st.floats(-3, 3, allow_nan=False)


def test_polyabs_eval_and_derivative():
    p = PolyAbs(1, 2, 3, 4, 5)
    x = np.array([-2.0, 0.0, 1.5])
    assert np.allclose(p(x), 1 + 2 * x + 3 * x ** 2 + 4 * x ** 3 + 5 * np.abs(x))
    assert np.allclose(p.derivative()(x), 2 + 6 * x + 12 * x ** 2 + 5 * np.sign(x))
    assert p.derivative()(0.0) == 2.0  # d|x|/dx at 0 is 0
    assert PolyAbs.constant(3.0).is_constant


def test_polyabs_fit():
    p = PolyAbs.fit(lambda x: 2 - x * x * x + 0.5 * abs(x))
    assert np.allclose(p.coef, (2, 0, 0, -1, 0.5), atol=1e-12)
    assert PolyAbs.fit(np.exp) is None


def test_fd_derivative():
    d = derivative(np.sin)
    assert d(0.3) == pytest.approx(math.cos(0.3), rel=1e-8)
    assert derivative(np.sin, np.cos) is np.cos


@given(coef, coef, coef)
def test_f_bar_linear(a, c, x):
    s = linear_system(a=a, c=c)
    assert f_bar(s, x) == pytest.approx(-(1 - a * c) * x, rel=1e-12, abs=1e-12)


@given(st.floats(0.1, 3), st.floats(0.1, 3))
def test_f_bar_nonlinear_closed_forms(a, c):
    assert np.allclose(f_bar(nonlinear_system_1(a=a, c=c), XS), c - XS, rtol=1e-12)
    assert np.allclose(f_bar(nonlinear_system_2(), XS), -XS, rtol=1e-12)
    assert np.allclose(f_bar(nonlinear_system_3(a=a), XS), -XS - XS ** 3, rtol=1e-12)


def test_f_bar_g1_zero_is_f1():
    s = nonlinear_system_3()
    assert np.array_equal(f_bar(s, XS), s.f1(XS))


def test_f_bar_guards_g2_zero():
    s = FastSlowSystem(PolyAbs(0, -1), PolyAbs(1), PolyAbs(1), PolyAbs(0, 1), 0.01, 0.5, 1.0, 2.0)
    with pytest.raises(ZeroDivisionError):
        f_bar(s, 0.0)


def test_f_bar_derivative():
    s = linear_system(a=0.2, c=1.0)
    assert f_bar_derivative(s, 0.7) == pytest.approx(-0.8)
    s2 = FastSlowSystem(np.sin, np.cos, np.exp, lambda x: -1 - x * x, 0.01, 0.5, 1.0, 2.0)
    x, h = 0.4, 1e-5
    num = (f_bar(s2, x + h) - f_bar(s2, x - h)) / (2 * h)
    assert f_bar_derivative(s2, x) == pytest.approx(num, rel=1e-6)


def test_validate_examples():
    r = validate(linear_system(a=0.2, c=1.0), (-10, 10))
    assert r.valid and r.n_plus_eligible and not r.violations
    bad = FastSlowSystem(PolyAbs(0, -1), PolyAbs(1), PolyAbs(0), PolyAbs(1), 0.01, 0.5, 1.0, 2.0)
    r = validate(bad, (-1, 1), n_probes=11)
    assert not r.valid
    assert sum("g2" in v for v in r.violations) == 11
    assert validate(nonlinear_system_2()).valid
    r = validate(nonlinear_system_1(), (-1, 1))
    assert r.valid and not r.n_plus_eligible


def test_validate_does_not_mutate():
    s = nonlinear_system_2()
    before = (s.f1, s.f2, s.g1, s.g2, s.epsilon, s.gamma, s.b, s.alpha, s.beta, s.x0, s.y0)
    validate(s)
    assert before == (s.f1, s.f2, s.g1, s.g2, s.epsilon, s.gamma, s.b, s.alpha, s.beta, s.x0,
                      s.y0)


def test_rho_and_beta_star():
    assert rho(1 - 1 / 1.7, 1.7) == pytest.approx(0.0, abs=1e-15)
    assert rho(1.0, 2.0) == 0.5
    assert rho(0.0, 1.5) == pytest.approx(-1 / 3)
    assert beta_star(0.5, 1.0) == 0.5
    assert beta_star(0.5, -2.0) == -0.5
    assert beta_star(0.0, -1.0) == 0.0
    with pytest.raises(ValueError):
        beta_star(0.5, 0.0)


def test_builtin_defaults():
    s = nonlinear_system_1()
    assert s.x0 == 1.0 and s.rho == pytest.approx(0.0, abs=1e-15)
    assert linear_system(alpha=1.9).gamma == pytest.approx(1 - 1 / 1.9)
    with pytest.raises(ValueError):
        linear_system(alpha=1.0)


def test_scalar_sde_interpretation_checks():
    with pytest.raises(ValueError):
        ScalarSDE(lambda z: -z, lambda z: 0 * z, 2.0, interpretation="ito_additive")
    with pytest.raises(ValueError):
        ScalarSDE(lambda z: -z, lambda z: 1 + 0 * z, 2.0, interpretation="deterministic")
    with pytest.raises(ValueError):
        ScalarSDE(lambda z: -z, lambda z: 1 + 0 * z, 2.0, interpretation="stratonovich")


def test_marcus_map_spot_check():
    k = 0.3
    good = ScalarSDE(lambda z: -z, lambda z: k * z, 1.7, interpretation="marcus",
                     marcus_map=lambda r, dl, z: z * math.exp(k * r * dl))
    assert good.check_marcus_map()
    wrong = ScalarSDE(lambda z: -z, lambda z: k * z, 1.7, interpretation="marcus",
                      marcus_map=lambda r, dl, z: z + k * r * dl * z)
    assert not wrong.check_marcus_map()
