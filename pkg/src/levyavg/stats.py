"""Density, characteristic-function and autocodifference estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

__all__ = [
    "DensityEstimate",
    "AFEstimate",
    "SamplePlan",
    "histogram_pdf",
    "chi2_quantile",
    "plan_sample_size",
    "empirical_cf",
    "autocodifference",
    "autocodiff_linear_analytic",
    "ks_distance",
    "count_modes",
    "tail_mass",
    "skewness_parameter",
    "bowley_skewness",
    "write_density_csv",
    "write_af_csv",
    "write_cf_csv",
]


def _values(series):
    v = getattr(series, "values", series)
    return np.asarray(v, dtype=float).ravel()


@dataclass
class DensityEstimate:
    bin_edges: np.ndarray
    densities: np.ndarray
    n_samples: int
    n_below: int = 0
    n_above: int = 0

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self):
        return np.diff(self.bin_edges)

    def integral(self) -> float:
        return float(np.sum(self.densities * self.widths))

    def cdf(self):
        """CDF at the bin edges (relative to in-range mass)."""
        return np.concatenate([[0.0], np.cumsum(self.densities * self.widths)])


def histogram_pdf(series, n_bins: int, range) -> DensityEstimate:
    """Normalised histogram on ``range``; out-of-range samples are counted, not binned."""
    x = _values(series)
    if x.size == 0:
        raise ValueError("empty series")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    lo, hi = float(range[0]), float(range[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError("range must be a finite interval")
    edges = np.linspace(lo, hi, n_bins + 1)
    below = int(np.count_nonzero(x < lo))
    above = int(np.count_nonzero(x > hi))
    counts, _ = np.histogram(x, bins=edges)
    inside = int(counts.sum())
    if inside == 0:
        raise ValueError(f"no samples inside {range} ({below} below, {above} above)")
    dens = counts / (inside * np.diff(edges))
    return DensityEstimate(edges, dens, int(x.size), below, above)


def chi2_quantile(p: float, dof: int = 1, tol: float = 1e-10) -> float:
    """Quantile of the chi-square law by bisection on the regularised gamma function."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    lo, hi = 0.0, 1.0
    while gammainc(dof / 2.0, hi / 2.0) < p:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if gammainc(dof / 2.0, mid / 2.0) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SamplePlan:
    M_Z: float
    N_Z: int
    N: int


def plan_sample_size(pi_target: float, omega: float, n_bins: int, sample_Dt: float,
                     decorrelation_time: float) -> SamplePlan:
    """Samples needed so every bin of mass ``pi_target`` is resolved to +-omega.

    Uses a Bonferroni-corrected 95% chi-square bound over ``n_bins`` bins;
    ``N`` accounts for keeping one sample per decorrelation time.
    """
    if not 0 < pi_target < 1:
        raise ValueError("pi_target must lie in (0, 1)")
    if not omega > 0:
        raise ValueError("omega must be positive")
    if n_bins < 1 or not (sample_Dt > 0 and decorrelation_time > 0):
        raise ValueError("n_bins, sample_Dt and decorrelation_time must be positive")
    m_z = chi2_quantile(1.0 - 0.05 / n_bins, 1)
    n_z = m_z * pi_target / omega ** 2
    n = n_z * decorrelation_time / sample_Dt
    return SamplePlan(m_z, int(math.ceil(n_z)), int(math.ceil(n)))


def empirical_cf(series, k_grid):
    """Sample mean of exp(i k z) on ``k_grid``.

    Values are sorted first so the result does not depend on sample order.
    """
    x = np.sort(_values(series))
    if x.size == 0:
        raise ValueError("empty series")
    k = np.atleast_1d(np.asarray(k_grid, dtype=float))
    out = np.empty(k.shape, dtype=complex)
    for i, kk in enumerate(k.ravel()):
        if kk == 0.0:
            out.flat[i] = 1.0
            continue
        ph = kk * x
        out.flat[i] = complex(np.mean(np.cos(ph)), np.mean(np.sin(ph)))
    return out[0] if np.ndim(k_grid) == 0 else out


def _lag_sums(w, max_lag, block=1 << 16):
    """S[n] = sum_{j=0}^{N-1-n} conj(w[j]) * w[j+n] for n = 0..max_lag, blockwise FFT."""
    N = len(w)
    S = np.zeros(max_lag + 1, dtype=complex)
    nfft = 1 << int(math.ceil(math.log2(block + 2 * max_lag + 1)))
    for start in range(0, N, block):
        a = w[start:start + block]
        b = w[start:start + len(a) + max_lag]
        fa = np.fft.fft(a, nfft)
        fb = np.fft.fft(b, nfft)
        S += np.fft.ifft(np.conj(fa) * fb)[:max_lag + 1]
    return S


@dataclass
class AFEstimate:
    lags: np.ndarray
    values: np.ndarray
    n_samples: int
    stderr: np.ndarray
    unreliable: np.ndarray

    @property
    def lag_steps(self):
        return np.arange(len(self.lags))


def _af_core(z, max_lag):
    N = len(z)
    w = np.exp(1j * z)
    S = _lag_sums(w, max_lag)
    counts = N - np.arange(max_lag + 1)
    psi = S / counts
    cw = np.concatenate([[0.0], np.cumsum(w)])
    n = np.arange(max_lag + 1)
    phi_late = (cw[N] - cw[n]) / counts            # windows [n, N-1], k = 1
    phi_early = np.conj(cw[N - n] - cw[0]) / counts  # windows [0, N-1-n], k = -1
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.log(psi) - np.log(phi_late) - np.log(phi_early)
    return a, psi


def autocodifference(series, max_lag_steps: int, n_batches: int = 10) -> AFEstimate:
    """Autocodifference at lags ``0..max_lag_steps`` sampling steps.

    Standard errors come from ``n_batches`` contiguous batch means; a lag is
    flagged unreliable when |Psi| is below ten standard errors of Psi.
    """
    z = _values(series)
    N = len(z)
    if max_lag_steps < 0:
        raise ValueError("max_lag_steps must be non-negative")
    if max_lag_steps > N // 100:
        raise ValueError(f"max_lag_steps = {max_lag_steps} exceeds len/100 = {N // 100}")
    a, psi = _af_core(z, max_lag_steps)
    edges = np.linspace(0, N, n_batches + 1).astype(int)
    ba, bp = [], []
    for i in range(n_batches):
        seg = z[edges[i]:edges[i + 1]]
        x, p = _af_core(seg, max_lag_steps)
        ba.append(x)
        bp.append(p)
    ba, bp = np.array(ba), np.array(bp)
    se_a = np.abs(np.std(ba, axis=0, ddof=1)) / math.sqrt(n_batches)
    se_p = np.sqrt(np.var(bp.real, axis=0, ddof=1) + np.var(bp.imag, axis=0, ddof=1)) \
        / math.sqrt(n_batches)
    dt = getattr(series, "sample_Dt", 1.0)
    unreliable = np.abs(psi) < 10.0 * se_p
    return AFEstimate(np.arange(max_lag_steps + 1) * dt, a, N, se_a, unreliable)


def autocodiff_linear_analytic(tau, a, b, c, alpha, beta=0.0):
    """Closed-form autocodifference of the linear (L) model."""
    r = 1.0 - a * c
    if not r > 0:
        raise ValueError("need 1 - a*c > 0")
    tau = np.asarray(tau, dtype=float)
    pref = abs(a * b) ** alpha / (alpha * r)
    e1 = np.exp(-alpha * r * tau)
    g = np.abs(1.0 - np.exp(-r * tau)) ** alpha
    bs = beta * math.copysign(1.0, a) if a != 0 else beta
    re = pref * (1.0 + e1 - g)
    im = -bs * math.tan(math.pi * alpha / 2.0) * pref * ((1.0 - e1) - g)
    out = re + 1j * im
    return out[()] if out.ndim == 0 else out


def _ecdf_sup(x, y):
    x, y = np.sort(x), np.sort(y)
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / len(x)
    fy = np.searchsorted(y, grid, side="right") / len(y)
    return float(np.max(np.abs(fx - fy)))


def ks_distance(d1, d2, stride: int = 100) -> float:
    """Two-sample Kolmogorov-Smirnov distance.

    Series are first thinned to every ``stride``-th sample.  Two
    DensityEstimates on identical bins are compared through their CDFs at
    the bin edges.
    """
    if isinstance(d1, DensityEstimate) or isinstance(d2, DensityEstimate):
        if not (isinstance(d1, DensityEstimate) and isinstance(d2, DensityEstimate)):
            raise TypeError("compare a DensityEstimate with another DensityEstimate")
        if not np.array_equal(d1.bin_edges, d2.bin_edges):
            raise ValueError("density estimates must share bin edges")
        return float(np.max(np.abs(d1.cdf() - d2.cdf())))
    x = _values(d1)[::stride]
    y = _values(d2)[::stride]
    if x.size == 0 or y.size == 0:
        raise ValueError("empty series")
    return _ecdf_sup(x, y)


def count_modes(series, n_bins: int = 40, range=None, smooth: int = 5) -> int:
    """Strict local maxima of a moving-average-smoothed histogram.

    The default range is the pooled central 99% of the data.
    """
    x = _values(series)
    if range is None:
        range = tuple(np.quantile(x, [0.005, 0.995]))
    counts, _ = np.histogram(x, bins=n_bins, range=range)
    h = np.convolve(counts.astype(float), np.ones(smooth) / smooth, mode="valid")
    inner = (h[1:-1] > h[:-2]) & (h[1:-1] > h[2:])
    return int(np.count_nonzero(inner))


def tail_mass(series, threshold: float) -> float:
    x = _values(series)
    return float(np.count_nonzero(np.abs(x) > threshold)) / x.size


def skewness_parameter(series, alpha: float, k=(0.25, 0.5)) -> float:
    """Skewness parameter estimated from the empirical CF at two frequencies.

    Fits ``log Phi(k) = i*mu*k - c*k**alpha*(1 + i*beta*tan(pi*alpha/2))``
    for k > 0, which removes the location mu.  Meaningless at alpha = 2.
    """
    k1, k2 = float(k[0]), float(k[1])
    phi = empirical_cf(series, np.array([k1, k2]))
    lg = np.log(phi)
    c = -0.5 * (lg[0].real / k1 ** alpha + lg[1].real / k2 ** alpha)
    # Im log Phi(k) = mu*k - c*beta*T*k**alpha; eliminate mu
    det = k1 * k2 ** alpha - k2 * k1 ** alpha
    cbt = (lg[1].imag * k1 - lg[0].imag * k2) / det
    return float(-cbt / (c * math.tan(math.pi * alpha / 2.0)))


def bowley_skewness(series) -> float:
    q1, q2, q3 = np.quantile(_values(series), [0.25, 0.5, 0.75])
    return float((q3 + q1 - 2 * q2) / (q3 - q1))


def _write(path, header, cols):
    np.savetxt(path, np.column_stack(cols), fmt="%.17g", delimiter=",", header=header,
               comments="")


def write_density_csv(d: DensityEstimate, path) -> None:
    _write(path, "bin_center,density", [d.centers, d.densities])


def write_af_csv(af: AFEstimate, path) -> None:
    _write(path, "lag,re,im", [af.lags, af.values.real, af.values.imag])


def write_cf_csv(k, values, path) -> None:
    values = np.asarray(values)
    _write(path, "k,re,im", [np.asarray(k, dtype=float), values.real, values.imag])
