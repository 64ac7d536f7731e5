"""Reduced stochastic models for fast-slow systems driven by alpha-stable noise."""

from . import _backend
from .asymptotics import (CfContext, QuadratureError, cf_integral_asymptotic,
                          cf_integral_quadrature, convergence_slope, phi_v_cf, psi_v_cf)
from .integrators import (SCHEMES, SampleSeries, SimConfig, SimulationAborted, read_series_csv,
                          simulate, simulate_l_transient, stratonovich_reference,
                          write_series_csv)
from .reduction import LApprox, NPlusApprox, a_approx, l_approx, n_plus_approx, t_transform
from .sde_models import (BUILTIN_SYSTEMS, FastSlowSystem, PolyAbs, RationalForm, ScalarSDE,
                         beta_star, f_bar, linear_system, nonlinear_system_1,
                         nonlinear_system_2, nonlinear_system_3, validate)
from .stable_noise import (StableParams, cpp_decompose, make_rng, sample_increments,
                           stable_cf, xi)
from .stats import (autocodiff_linear_analytic, autocodifference, count_modes, empirical_cf,
                    histogram_pdf, ks_distance, plan_sample_size, tail_mass)

__version__ = "0.1.0"


def backend() -> str:
    """Name of the active kernel backend ("cython" or "python")."""
    return _backend.name
