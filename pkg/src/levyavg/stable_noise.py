"""Alpha-stable increments and their compound-Poisson decomposition.

The characteristic function convention used throughout the package is

    Phi(k) = exp(-sigma**alpha * |k|**alpha * (1 + i*beta*sgn(k)*tan(pi*alpha/2)))

Note that this sign convention for ``beta`` is the mirror image of the
Samorodnitsky-Taqqu one, so the Chambers-Mallows-Stuck transform below is
fed ``-beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from . import _backend

__all__ = [
    "StableParams",
    "CppDecomposition",
    "check_alpha",
    "xi",
    "stable_cf",
    "sample_increment",
    "sample_increments",
    "cpp_decompose",
    "sample_cpp_increment",
    "sample_cpp_block",
    "make_rng",
]


def check_alpha(alpha: float, allow_below_one: bool = True) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 2.0):
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    if alpha == 1.0:
        raise ValueError("alpha = 1 is not supported: tan(pi*alpha/2) is singular there")
    if alpha < 1.0 and not allow_below_one:
        raise ValueError(f"alpha = {alpha} < 1 is outside the supported range (1, 2]")
    return alpha


@dataclass(frozen=True)
class StableParams:
    """Stability index, skewness and scale of a stable law."""

    alpha: float
    beta: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        check_alpha(self.alpha)
        if not (-1.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must lie in [-1, 1], got {self.beta}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @classmethod
    def for_step(cls, alpha: float, beta: float, delta_t: float) -> "StableParams":
        """Law of one increment of the unit Levy process over ``delta_t``."""
        if not delta_t > 0:
            raise ValueError("delta_t must be positive")
        return cls(alpha, beta, delta_t ** (1.0 / alpha))


def xi(s, alpha: float, beta: float):
    """Skewness factor ``1 + i*beta*sgn(s)*tan(pi*alpha/2)`` with sgn(0) = 0."""
    alpha = check_alpha(alpha)
    return 1.0 + 1j * beta * np.sign(s) * math.tan(math.pi * alpha / 2.0)


def stable_cf(k, params: StableParams):
    k = np.asarray(k, dtype=float)
    out = np.exp(-(params.sigma ** params.alpha) * np.abs(k) ** params.alpha
                 * xi(k, params.alpha, params.beta))
    return out[()] if out.ndim == 0 else out


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for logical stream ``stream`` of ``seed``.

    Streams are independent and can be created in any order.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def sample_increments(params: StableParams, rng: np.random.Generator, size) -> np.ndarray:
    """Draw i.i.d. stable variates with the package's CF convention.

    For alpha = 2 these are Gaussian with variance ``2*sigma**2``.
    """
    if params.alpha == 2.0:
        return math.sqrt(2.0) * params.sigma * rng.standard_normal(size)
    r = rng.random(size)
    w = rng.standard_exponential(size)
    out = np.empty(np.shape(r))
    _backend.kernels.cms_unit(r.reshape(-1), w.reshape(-1), params.alpha,
                              -params.beta, out.reshape(-1))
    if params.sigma != 1.0:
        out *= params.sigma
    return out


def sample_increment(params: StableParams, rng: np.random.Generator) -> float:
    return float(sample_increments(params, rng, 1)[0])


@dataclass(frozen=True)
class CppDecomposition:
    """Gaussian plus compound-Poisson stand-in for symmetric stable noise.

    Jumps of magnitude below ``threshold_R`` are replaced by a Brownian
    term with scale ``eta``; larger ones arrive at rate ``lambda_rate``
    with Pareto magnitudes of index alpha on ``|x| >= threshold_R``.
    """

    alpha: float
    eta: float
    lambda_rate: float
    threshold_R: float
    c_alpha: float

    def jump_quantile(self, u):
        """Magnitude with tail ``P(|J| > x) = (R/x)**alpha`` at uniform ``u``."""
        return self.threshold_R * np.power(1.0 - np.asarray(u), -1.0 / self.alpha)


def _c_alpha(alpha: float) -> float:
    if alpha == 2.0:
        return 0.0
    return (1.0 - alpha) / (gamma_fn(2.0 - alpha) * math.cos(math.pi * alpha / 2.0))


def cpp_decompose(alpha: float, threshold_R: float = 1.0) -> CppDecomposition:
    alpha = check_alpha(alpha)
    if not threshold_R > 0:
        raise ValueError("threshold_R must be positive")
    c_alpha = _c_alpha(alpha)
    if alpha == 2.0:
        return CppDecomposition(alpha, math.sqrt(2.0), 0.0, threshold_R, 0.0)
    eta2 = alpha / (2.0 - alpha) * c_alpha * threshold_R ** (2.0 - alpha)
    return CppDecomposition(alpha, math.sqrt(eta2), c_alpha / threshold_R ** alpha,
                            threshold_R, c_alpha)


def _check_symmetric(beta: float) -> None:
    if beta != 0.0:
        raise ValueError("the compound-Poisson decomposition is only available for beta = 0")


def sample_cpp_increment(decomp: CppDecomposition, delta_t: float,
                         rng: np.random.Generator, beta: float = 0.0) -> dict:
    """One step: Gaussian part ``N(0, eta**2 * delta_t)`` and the list of jumps."""
    _check_symmetric(beta)
    if not delta_t > 0:
        raise ValueError("delta_t must be positive")
    gaussian = decomp.eta * math.sqrt(delta_t) * rng.standard_normal()
    n = rng.poisson(decomp.lambda_rate * delta_t) if decomp.lambda_rate > 0 else 0
    jumps = []
    if n:
        mags = decomp.jump_quantile(rng.random(n))
        signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        jumps = list(mags * signs)
    return {"gaussian_part": float(gaussian), "jumps": jumps}


def sample_cpp_block(decomp: CppDecomposition, delta_t: float, rng: np.random.Generator,
                     n_steps: int, beta: float = 0.0):
    """Vectorised :func:`sample_cpp_increment` for ``n_steps`` consecutive steps.

    Returns ``(dW, counts, jumps)``: standard Wiener increments over
    ``delta_t`` (not yet multiplied by eta), per-step jump counts and the
    concatenated jump sizes in step order.
    """
    _check_symmetric(beta)
    dw = math.sqrt(delta_t) * rng.standard_normal(n_steps)
    if decomp.lambda_rate > 0:
        counts = rng.poisson(decomp.lambda_rate * delta_t, n_steps).astype(np.int64)
    else:
        counts = np.zeros(n_steps, dtype=np.int64)
    total = int(counts.sum())
    u = rng.random(total)
    s = rng.random(total)
    jumps = decomp.jump_quantile(u) * np.where(s < 0.5, -1.0, 1.0)
    return dw, counts, jumps
