"""Fast-slow systems and scalar SDEs.

A fast-slow system has the form

    dx = (f1(x) + eps**-gamma * f2(x) * y) dt
    eps dy = (eps**gamma * g1(x) + g2(x) * y) dt + eps**gamma * b dL

with ``L`` an (alpha, beta)-stable Levy process.  The four coefficient
functions may be arbitrary vectorised callables; when they are
:class:`PolyAbs` instances the compiled kernels can integrate the system
without calling back into Python.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .stable_noise import check_alpha

__all__ = [
    "PolyAbs",
    "RationalForm",
    "FastSlowSystem",
    "ScalarSDE",
    "ValidationReport",
    "derivative",
    "validate",
    "f_bar",
    "f_bar_derivative",
    "rho",
    "beta_star",
    "linear_system",
    "nonlinear_system_1",
    "nonlinear_system_2",
    "nonlinear_system_3",
    "BUILTIN_SYSTEMS",
]

INTERPRETATIONS = ("deterministic", "ito_additive", "ito", "marcus")


class PolyAbs:
    """``c0 + c1*x + c2*x**2 + c3*x**3 + c4*|x|``.

    The evaluation order (Horner, then the ``|x|`` term) is shared with the
    compiled kernels so both backends round identically.
    """

    __slots__ = ("coef",)

    def __init__(self, c0=0.0, c1=0.0, c2=0.0, c3=0.0, cabs=0.0):
        self.coef = (float(c0), float(c1), float(c2), float(c3), float(cabs))

    @classmethod
    def constant(cls, c):
        return cls(c)

    def __call__(self, x):
        c0, c1, c2, c3, c4 = self.coef
        x = np.asarray(x, dtype=float) if not isinstance(x, float) else x
        out = ((c3 * x + c2) * x + c1) * x + c0 + c4 * abs(x)
        return out[()] if isinstance(out, np.ndarray) and out.ndim == 0 else out

    def derivative(self) -> "PolyAbsDerivative":
        return PolyAbsDerivative(self)

    @property
    def is_constant(self) -> bool:
        return all(c == 0.0 for c in self.coef[1:])

    def __eq__(self, other):
        return isinstance(other, PolyAbs) and self.coef == other.coef

    def __hash__(self):
        return hash(self.coef)

    def __repr__(self):
        return f"PolyAbs{self.coef}"

    @classmethod
    def fit(cls, fn: Callable, rtol: float = 1e-12) -> Optional["PolyAbs"]:
        """Recover a PolyAbs representation of ``fn`` if one exists.

        Interpolates at a few nodes and checks the result at 64 further
        points; returns None when ``fn`` is not of this form.
        """
        nodes = np.array([-3.0, -2.0, -1.0, 0.5, 1.5, 2.5, 4.0])
        try:
            vals = np.asarray(fn(nodes), dtype=float) * np.ones_like(nodes)
        except Exception:
            return None
        if not np.all(np.isfinite(vals)):
            return None
        design = np.column_stack([np.ones_like(nodes), nodes, nodes**2, nodes**3, np.abs(nodes)])
        coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
        coef = np.where(np.abs(coef) < 1e-13 * max(1.0, np.abs(coef).max()), 0.0, coef)
        cand = cls(*coef)
        probe = np.linspace(-7.3, 6.1, 64)
        try:
            ref = np.asarray(fn(probe), dtype=float) * np.ones_like(probe)
        except Exception:
            return None
        got = cand(probe)
        if np.all(np.abs(got - ref) <= rtol * np.maximum(1.0, np.abs(ref)) * 100):
            return cand
        return None


class PolyAbsDerivative:
    """Derivative of a :class:`PolyAbs`; the ``|x|`` term uses sgn(0) = 0."""

    __slots__ = ("parent",)

    def __init__(self, parent: PolyAbs):
        self.parent = parent

    def __call__(self, x):
        _, c1, c2, c3, c4 = self.parent.coef
        x = np.asarray(x, dtype=float) if not isinstance(x, float) else x
        out = (3.0 * c3 * x + 2.0 * c2) * x + c1 + c4 * np.sign(x)
        return out[()] if isinstance(out, np.ndarray) and out.ndim == 0 else out


def derivative(fn: Callable, analytic: Optional[Callable] = None) -> Callable:
    """Analytic derivative if known, otherwise a central difference.

    The difference step is ``max(1e-6, 1e-6*|x|)``.
    """
    if analytic is not None:
        return analytic
    if isinstance(fn, PolyAbs):
        return fn.derivative()

    def fd(x):
        x = np.asarray(x, dtype=float)
        h = np.maximum(1e-6, 1e-6 * np.abs(x))
        out = (fn(x + h) - fn(x - h)) / (2.0 * h)
        return out[()] if np.ndim(out) == 0 else out

    return fd


@dataclass(frozen=True)
class FastSlowSystem:
    f1: Callable
    f2: Callable
    g1: Callable
    g2: Callable
    epsilon: float
    gamma: float
    b: float
    alpha: float
    beta: float = 0.0
    x0: float = 0.0
    y0: float = 0.0
    f1_derivative: Optional[Callable] = None
    f2_derivative: Optional[Callable] = None
    g1_derivative: Optional[Callable] = None
    g2_derivative: Optional[Callable] = None
    name: str = "custom"
    domain: tuple = (-10.0, 10.0)
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        check_alpha(self.alpha)
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not (-1.0 <= self.beta <= 1.0):
            raise ValueError("beta must lie in [-1, 1]")

    @property
    def rho(self) -> float:
        return rho(self.gamma, self.alpha)

    def coef_table(self) -> Optional[np.ndarray]:
        """``(4, 5)`` PolyAbs coefficients of f1, f2, g1, g2, or None."""
        fns = (self.f1, self.f2, self.g1, self.g2)
        if all(isinstance(f, PolyAbs) for f in fns):
            return np.array([f.coef for f in fns], dtype=float)
        return None

    def drift_x(self, x, y):
        return self.f1(x) + self.epsilon ** (-self.gamma) * self.f2(x) * y

    def drift_y(self, x, y):
        """Drift of ``y`` after dividing the fast equation by eps."""
        return (self.epsilon ** self.gamma * self.g1(x) + self.g2(x) * y) / self.epsilon

    @property
    def noise_y(self) -> float:
        """Coefficient of dL in the y-equation, ``eps**(gamma-1) * b``."""
        return self.epsilon ** (self.gamma - 1.0) * self.b

    def derivatives(self):
        return (derivative(self.f1, self.f1_derivative), derivative(self.f2, self.f2_derivative),
                derivative(self.g1, self.g1_derivative), derivative(self.g2, self.g2_derivative))


@dataclass(frozen=True)
class RationalForm:
    """Kernel-friendly coefficients of a reduced SDE.

    drift(z) = A(z) - B(z)*C(z)/D(z) and noise_coeff(z) = scale*E(z)/F(z),
    each letter being a PolyAbs row of ``table``.
    """

    table: tuple  # six rows of five coefficients: A, B, C, D, E, F
    scale: float

    def array(self) -> np.ndarray:
        return np.array(self.table, dtype=float)

    def rows(self):
        return [PolyAbs(*r) for r in self.table]

    def map_kind(self):
        """Closed-form Marcus map available to the kernels: (kind, k)."""
        _, _, _, _, e, f = self.rows()
        if not f.is_constant:
            return None
        if e.is_constant:
            return ("additive", self.scale * e.coef[0] / f.coef[0])
        if e.coef[0] == 0 and e.coef[2:] == (0.0, 0.0, 0.0):
            return ("exponential", self.scale * e.coef[1] / f.coef[0])
        return None


@dataclass(frozen=True)
class ScalarSDE:
    """``dz = drift(z) dt + noise_coeff(z) * dL`` with a given interpretation.

    ``ito`` means a state-dependent Ito coefficient; ``marcus`` the jump-aware
    Marcus integral.  A nonzero ``wong_zakai`` adds ``wong_zakai*kappa*kappa'``
    to the drift of an Ito run.  ``marcus_map(r, dL, z)`` is the flow of
    ``d theta/dr = dL * noise_coeff(theta)`` started at z.
    """

    drift: Callable
    noise_coeff: Callable
    alpha: float
    beta: float = 0.0
    interpretation: str = "ito_additive"
    z0: float = 0.0
    drift_derivative: Optional[Callable] = None
    noise_coeff_derivative: Optional[Callable] = None
    marcus_map: Optional[Callable] = None
    kernel_form: Optional[RationalForm] = None
    name: str = "sde"
    wong_zakai: float = 0.0

    def __post_init__(self):
        if self.interpretation not in INTERPRETATIONS:
            raise ValueError(f"unknown interpretation {self.interpretation!r}")
        check_alpha(self.alpha)
        probe = np.linspace(-3.0, 3.0, 13)
        zero_noise = np.all(np.asarray(self.noise_coeff(probe)) * np.ones_like(probe) == 0.0)
        if (self.interpretation == "deterministic") != bool(zero_noise):
            raise ValueError("interpretation 'deterministic' requires (and is implied by) zero noise")

    def kappa_prime(self) -> Callable:
        return derivative(self.noise_coeff, self.noise_coeff_derivative)

    def check_marcus_map(self, points=None, rtol=1e-5) -> bool:
        """Spot-check theta(0) = z and d theta/dr = dL * kappa(theta)."""
        if self.marcus_map is None:
            return False
        if points is None:
            points = [(-1.3, 0.7), (0.4, -0.2), (1.1, 1.5), (2.0, -0.9)]
        for z, dl in points:
            if not math.isclose(self.marcus_map(0.0, dl, z), z, rel_tol=0, abs_tol=1e-12):
                return False
            for r in (0.25, 0.5, 0.75):
                h = 1e-6
                slope = (self.marcus_map(r + h, dl, z) - self.marcus_map(r - h, dl, z)) / (2 * h)
                want = dl * self.noise_coeff(self.marcus_map(r, dl, z))
                if abs(slope - want) > rtol * max(1.0, abs(want)):
                    return False
        return True


@dataclass
class ValidationReport:
    valid: bool
    n_plus_eligible: bool
    violations: list
    probe_domain: tuple
    n_probes: int

    def __str__(self):
        head = "valid" if self.valid else "INVALID"
        lines = [f"{head}; N+ eligible: {self.n_plus_eligible}"]
        lines += [f"  - {v}" for v in self.violations[:10]]
        if len(self.violations) > 10:
            lines.append(f"  ... {len(self.violations) - 10} more")
        return "\n".join(lines)


def _grid(domain, n):
    lo, hi = float(domain[0]), float(domain[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError("probe domain must be a finite interval")
    return np.linspace(lo, hi, n)


def validate(system: FastSlowSystem, probe_domain=None, n_probes: int = 201) -> ValidationReport:
    """Probe the sign conditions on g2 (always) and f2 (for N+)."""
    if n_probes < 2:
        raise ValueError("n_probes must be >= 2")
    domain = tuple(probe_domain) if probe_domain is not None else tuple(system.domain)
    xs = _grid(domain, n_probes)
    violations = []
    g2 = np.asarray(system.g2(xs), dtype=float) * np.ones_like(xs)
    for x, v in zip(xs, g2):
        if not v < 0:
            violations.append(f"g2({x:.6g}) = {v:.6g} is not negative")
    f2 = np.asarray(system.f2(xs), dtype=float) * np.ones_like(xs)
    eligible = bool(np.all(f2 > 0) or np.all(f2 < 0))
    if not eligible:
        bad = xs[(f2 == 0) | (np.sign(f2) != np.sign(f2[0]))]
        violations.append(
            f"f2 changes sign or vanishes on {domain} (first offending probe x = {bad[0]:.6g}); "
            "N+ reduction unavailable")
    valid = bool(np.all(g2 < 0))
    return ValidationReport(valid, eligible, violations, domain, n_probes)


def f_bar(system: FastSlowSystem, x):
    g2 = system.g2(x)
    if np.any(np.asarray(g2) == 0):
        raise ZeroDivisionError("g2 vanishes; averaged drift undefined")
    return system.f1(x) - system.f2(x) * system.g1(x) / g2


def f_bar_derivative(system: FastSlowSystem, x):
    """Quotient-rule derivative of the averaged drift."""
    d1, d2, dg1, dg2 = system.derivatives()
    f2, g1, g2 = system.f2(x), system.g1(x), system.g2(x)
    num = (d2(x) * g1 + f2 * dg1(x)) * g2 - f2 * g1 * dg2(x)
    return d1(x) - num / (g2 * g2)


def rho(gamma: float, alpha: float) -> float:
    """Noise-scaling exponent of the reduced models."""
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    return gamma - 1.0 + 1.0 / alpha


def beta_star(beta: float, f2_sign: float) -> float:
    if f2_sign == 0 or not math.isfinite(f2_sign):
        raise ValueError("f2_sign must be +1 or -1")
    return beta * math.copysign(1.0, f2_sign)


def _gamma_default(alpha, gamma):
    return 1.0 - 1.0 / alpha if gamma is None else float(gamma)


def linear_system(a=0.2, b=0.7, c=1.0, epsilon=0.01, alpha=2.0, beta=0.0,
                  x0=0.0, y0=0.0, gamma=None) -> FastSlowSystem:
    """dx = (-x + eps^-g a y) dt,  eps dy = (eps^g c x - y) dt + eps^g b dL."""
    return FastSlowSystem(
        f1=PolyAbs(0, -1), f2=PolyAbs(a), g1=PolyAbs(0, c), g2=PolyAbs(-1),
        epsilon=epsilon, gamma=_gamma_default(alpha, gamma), b=b, alpha=alpha, beta=beta,
        x0=x0, y0=y0, name="linear", params=dict(a=a, b=b, c=c))


def nonlinear_system_1(a=1.0, b=0.1, c=1.0, epsilon=0.01, alpha=1.7, beta=0.0,
                       x0=None, y0=0.0, gamma=None) -> FastSlowSystem:
    """Bilinear slow dynamics: dx = (c - x + eps^-g x y) dt, dy = -y/(eps a) dt + ..."""
    return FastSlowSystem(
        f1=PolyAbs(c, -1), f2=PolyAbs(0, 1), g1=PolyAbs(0), g2=PolyAbs(-1.0 / a),
        epsilon=epsilon, gamma=_gamma_default(alpha, gamma), b=b, alpha=alpha, beta=beta,
        x0=c if x0 is None else x0, y0=y0, name="nonlinear1", domain=(1e-3, 10.0),
        params=dict(a=a, b=b, c=c))


def nonlinear_system_2(b=2.0, epsilon=0.01, alpha=1.9, beta=0.0, x0=0.0, y0=0.0,
                       gamma=None) -> FastSlowSystem:
    """State-dependent reversion: g2(x) = -(1 + |x|)."""
    return FastSlowSystem(
        f1=PolyAbs(0, -1), f2=PolyAbs(1), g1=PolyAbs(0), g2=PolyAbs(-1, 0, 0, 0, -1),
        epsilon=epsilon, gamma=_gamma_default(alpha, gamma), b=b, alpha=alpha, beta=beta,
        x0=x0, y0=y0, name="nonlinear2", params=dict(b=b))


def nonlinear_system_3(a=1.0, b=0.3, epsilon=0.01, alpha=1.7, beta=0.0, x0=0.0, y0=0.0,
                       gamma=None) -> FastSlowSystem:
    """Cubic slow drift: dx = (-x - x^3 + eps^-g y) dt, dy = -y/(eps a) dt + ..."""
    return FastSlowSystem(
        f1=PolyAbs(0, -1, 0, -1), f2=PolyAbs(1), g1=PolyAbs(0), g2=PolyAbs(-1.0 / a),
        epsilon=epsilon, gamma=_gamma_default(alpha, gamma), b=b, alpha=alpha, beta=beta,
        x0=x0, y0=y0, name="nonlinear3", params=dict(a=a, b=b))


# Per-system simulation defaults: full-system step, full-system scheme and
# the scheme used for the (N+) reduction.  Reduced models step at Dt.
BUILTIN_SYSTEMS = {
    "linear": dict(factory=linear_system, full_dt=1e-3, full_scheme="euler",
                   nplus_scheme="euler"),
    "nonlinear1": dict(factory=nonlinear_system_1, full_dt=2e-4,
                       full_scheme="predictor_corrector", nplus_scheme="marcus_closed"),
    "nonlinear2": dict(factory=nonlinear_system_2, full_dt=5e-4, full_scheme="euler",
                       nplus_scheme="marcus_numeric"),
    "nonlinear3": dict(factory=nonlinear_system_3, full_dt=1e-4, full_scheme="euler",
                       nplus_scheme="predictor_corrector"),
}
