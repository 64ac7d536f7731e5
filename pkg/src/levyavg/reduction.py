"""Reduced models of a fast-slow system.

(A)  the averaged ODE ``dx = f_bar(x) dt``;
(L)  the averaged ODE plus a linear Levy-driven fluctuation around it;
(N+) a scalar Marcus SDE keeping the full nonlinearity in x.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .sde_models import (FastSlowSystem, PolyAbs, RationalForm, ScalarSDE, beta_star,
                         derivative, f_bar, f_bar_derivative, validate)

__all__ = [
    "LApprox",
    "NPlusApprox",
    "a_approx",
    "l_approx",
    "n_plus_approx",
    "t_transform",
    "find_anchor",
    "marcus_map_for",
]


def _warn_rho(system: FastSlowSystem) -> None:
    if abs(system.rho) > 1e-12:
        warnings.warn(
            f"rho = {system.rho:.6g} != 0: the eps**rho noise factor is only exact for "
            "gamma = 1 - 1/alpha; with other gamma the simulated full system keeps an "
            "O(1) noise amplitude", RuntimeWarning, stacklevel=3)


def _polys(system: FastSlowSystem):
    tab = system.coef_table()
    if tab is None:
        return None
    return [PolyAbs(*row) for row in tab]


def _zero_noise(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def a_approx(system: FastSlowSystem) -> ScalarSDE:
    """Deterministic averaged ODE started at x0."""
    polys = _polys(system)
    form = None
    if polys is not None:
        f1, f2, g1, g2 = polys
        form = RationalForm((f1.coef, f2.coef, g1.coef, g2.coef, (0.0,) * 5, (1.0,) + (0.0,) * 4),
                            0.0)
    return ScalarSDE(drift=lambda x: f_bar(system, x), noise_coeff=_zero_noise,
                     alpha=system.alpha, beta=system.beta, interpretation="deterministic",
                     z0=system.x0, drift_derivative=lambda x: f_bar_derivative(system, x),
                     kernel_form=form, name=f"{system.name}/A")


def find_anchor(system: FastSlowSystem, x_start: Optional[float] = None,
                tol: float = 1e-13, max_iter: int = 200) -> float:
    """Attracting fixed point of f_bar reached by damped Newton from ``x_start``."""
    x = float(system.x0 if x_start is None else x_start)
    for _ in range(max_iter):
        fx = float(f_bar(system, x))
        if abs(fx) <= tol * max(1.0, abs(x)):
            break
        d = float(f_bar_derivative(system, x))
        if d == 0.0 or not math.isfinite(d):
            raise RuntimeError(f"Newton stalled at x = {x}: zero slope")
        step = -fx / d
        lam = 1.0
        while lam > 1e-8:
            trial = x + lam * step
            ft = float(f_bar(system, trial))
            if math.isfinite(ft) and abs(ft) < abs(fx):
                break
            lam *= 0.5
        x = x + lam * step
    else:
        raise RuntimeError("Newton iteration for the anchor did not converge")
    return x


def _affine_drift(polys) -> bool:
    f1, f2, g1, g2 = polys
    flat = (0.0, 0.0, 0.0)
    return (f2.is_constant and g2.is_constant and f1.coef[2:] == flat and g1.coef[2:] == flat)


@dataclass(frozen=True)
class LApprox:
    """Averaged trajectory plus linear fluctuation ``xi``.

    ``fluctuation_sde`` is the SDE for xi with the slope and noise scale
    frozen at ``anchor``; :meth:`stationary_sde` gives the same process for
    ``anchor + xi`` directly.
    """

    mean_ode: ScalarSDE
    fluctuation_sde: ScalarSDE
    anchor: float
    slope: float
    noise_scale: float
    beta_star: float
    system: FastSlowSystem

    def noise_scale_at(self, x):
        s = self.system
        return s.epsilon ** s.rho * s.b * np.abs(s.f2(x) / s.g2(x))

    def stationary_sde(self) -> ScalarSDE:
        k, x0, q = self.slope, self.anchor, self.noise_scale
        polys = _polys(self.system)
        if polys is not None and _affine_drift(polys):
            # the linearisation of an affine drift is the drift itself
            f1, f2, g1, g2 = polys
            form = RationalForm((f1.coef, f2.coef, g1.coef, g2.coef, (1.0,) + (0.0,) * 4,
                                 (1.0,) + (0.0,) * 4), q)
            s = self.system
            return ScalarSDE(drift=lambda z: f_bar(s, z),
                             noise_coeff=lambda z: q * np.ones_like(np.asarray(z, dtype=float)),
                             alpha=s.alpha, beta=self.beta_star, interpretation="ito_additive",
                             z0=x0, drift_derivative=lambda z: f_bar_derivative(s, z),
                             noise_coeff_derivative=_zero_noise,
                             marcus_map=lambda r, dl, z: z + r * q * dl,
                             kernel_form=form, name=f"{s.name}/L")
        form = RationalForm(((-k * x0, k, 0.0, 0.0, 0.0), (0.0,) * 5, (0.0,) * 5,
                             (1.0, 0.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0, 0.0),
                             (1.0, 0.0, 0.0, 0.0, 0.0)), q)
        return ScalarSDE(drift=lambda z: k * (np.asarray(z, dtype=float) - x0),
                         noise_coeff=lambda z: q * np.ones_like(np.asarray(z, dtype=float)),
                         alpha=self.system.alpha, beta=self.beta_star,
                         interpretation="ito_additive", z0=x0,
                         drift_derivative=lambda z: k * np.ones_like(np.asarray(z, dtype=float)),
                         noise_coeff_derivative=_zero_noise,
                         marcus_map=lambda r, dl, z: z + r * q * dl,
                         kernel_form=form, name=f"{self.system.name}/L")


def l_approx(system: FastSlowSystem, anchor=None) -> LApprox:
    """Build the (L) model.

    ``anchor`` is a number or None; None selects the attracting fixed point
    of f_bar found from x0.
    """
    _warn_rho(system)
    x_star = find_anchor(system) if anchor is None else float(anchor)
    slope = float(f_bar_derivative(system, x_star))
    if slope >= 0:
        warnings.warn(f"f_bar'({x_star:.6g}) = {slope:.6g} >= 0: no stationary fluctuation",
                      RuntimeWarning, stacklevel=2)
    f2v = float(system.f2(x_star))
    g2v = float(system.g2(x_star))
    scale = system.epsilon ** system.rho * system.b * abs(f2v / g2v)
    bstar = beta_star(system.beta, f2v) if f2v != 0 else system.beta
    form = RationalForm(((0.0, slope, 0.0, 0.0, 0.0), (0.0,) * 5, (0.0,) * 5,
                         (1.0, 0.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0, 0.0),
                         (1.0, 0.0, 0.0, 0.0, 0.0)), scale)
    fluct = ScalarSDE(drift=lambda xi: slope * np.asarray(xi, dtype=float),
                      noise_coeff=lambda xi: scale * np.ones_like(np.asarray(xi, dtype=float)),
                      alpha=system.alpha, beta=bstar, interpretation="ito_additive", z0=0.0,
                      noise_coeff_derivative=_zero_noise, kernel_form=form,
                      name=f"{system.name}/L-xi")
    return LApprox(a_approx(system), fluct, x_star, slope, scale, bstar, system)


@dataclass(frozen=True)
class NPlusApprox:
    sde: ScalarSDE
    noise_coeff: Callable
    transform_T: Optional[Callable]
    system: FastSlowSystem


def _antiderivative(c):
    """Coefficients (in x) of G with G' = c0 + c1 x + c2 x^2 + c3 x^3 + c4 |x|."""
    c0, c1, c2, c3, c4 = c

    def g(x):
        return c0 * x + c1 * x * x / 2 + c2 * x ** 3 / 3 + c3 * x ** 4 / 4 + c4 * x * abs(x) / 2

    return g


def marcus_map_for(form: RationalForm) -> Optional[Callable]:
    """Closed-form Marcus flow ``theta(r; dL, z)`` when the noise coefficient allows one.

    Handles kappa = k (additive), kappa = k*x (exponential) and
    kappa = k/F(x) with F a sign-definite PolyAbs, where
    G(theta) = G(z) + k*r*dL is solved with G' = F.
    """
    kind = form.map_kind()
    if kind is not None:
        name, k = kind
        if name == "additive":
            return lambda r, dl, z: z + k * r * dl
        return lambda r, dl, z: z * math.exp(k * r * dl)
    _, _, _, _, e, f = form.rows()
    if not e.is_constant or e.coef[0] == 0:
        return None
    k = form.scale * e.coef[0]
    big_g = _antiderivative(f.coef)
    probe = f(np.linspace(-50, 50, 2001))
    if not (np.all(probe > 0) or np.all(probe < 0)):
        return None

    def theta(r, dl, z):
        target = big_g(z) + k * r * dl
        if target == big_g(z):
            return z
        lo, hi = z, z
        step = 1.0
        while (big_g(lo) - target) * (big_g(hi) - target) > 0:
            lo, hi = lo - step, hi + step
            step *= 2.0
        return optimize.brentq(lambda x: big_g(x) - target, lo, hi, xtol=1e-15, rtol=1e-15)

    return theta


def n_plus_approx(system: FastSlowSystem, probe_domain=None) -> NPlusApprox:
    """Build the (N+) Marcus SDE; requires f2 of constant sign."""
    report = validate(system, probe_domain)
    if not report.n_plus_eligible:
        raise ValueError("system is not N+ eligible:\n" + str(report))
    _warn_rho(system)
    s = system
    pref = s.epsilon ** s.rho * s.b

    def kappa(x):
        return pref * s.f2(x) / (-s.g2(x))

    d_f2 = derivative(s.f2, s.f2_derivative)
    d_g2 = derivative(s.g2, s.g2_derivative)

    def kappa_prime(x):
        f2, g2 = s.f2(x), s.g2(x)
        return pref * (-(d_f2(x) * g2 - f2 * d_g2(x)) / (g2 * g2))

    polys = _polys(s)
    form = None
    mmap = None
    constant = False
    if polys is not None:
        f1, f2, g1, g2 = polys
        neg_g2 = tuple(-c for c in g2.coef)
        form = RationalForm((f1.coef, f2.coef, g1.coef, g2.coef, f2.coef, neg_g2), pref)
        mmap = marcus_map_for(form)
        kind = form.map_kind()
        constant = kind is not None and kind[0] == "additive"
    else:
        xs = np.linspace(*report.probe_domain, 64)
        vals = np.asarray(kappa(xs), dtype=float) * np.ones_like(xs)
        constant = bool(np.all(vals == vals[0]))
    interp = "ito_additive" if constant else "marcus"
    sde = ScalarSDE(drift=lambda x: f_bar(s, x), noise_coeff=kappa, alpha=s.alpha, beta=s.beta,
                    interpretation=interp, z0=s.x0,
                    drift_derivative=lambda x: f_bar_derivative(s, x),
                    noise_coeff_derivative=kappa_prime, marcus_map=mmap, kernel_form=form,
                    name=f"{s.name}/N+")
    return NPlusApprox(sde, kappa, t_transform(s, s.x0, report.probe_domain), s)


def t_transform(system: FastSlowSystem, x_ref: float, domain=None) -> Callable:
    """T(x) = integral of g2/f2 from x_ref to x, so that T' f2 = g2.

    Evaluation raises if f2 vanishes between x_ref and x.
    """
    lo_dom, hi_dom = (domain if domain is not None else system.domain)

    def ratio(s):
        return float(system.g2(s) / system.f2(s))

    def T(x):
        x = float(x)
        if x == x_ref:
            return 0.0
        a, b = sorted((x_ref, x))
        probe = np.asarray(system.f2(np.linspace(a, b, 257)), dtype=float)
        if np.any(probe == 0) or not (np.all(probe > 0) or np.all(probe < 0)):
            raise ValueError(f"f2 vanishes between {x_ref} and {x}")
        pts = [0.0] if a < 0 < b else None
        val, _ = integrate.quad(ratio, a, b, epsabs=1e-10, epsrel=1e-12, limit=200, points=pts)
        return val if x > x_ref else -val

    T.domain = (lo_dom, hi_dom)
    return np.vectorize(T, otypes=[float])
