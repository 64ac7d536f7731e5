"""Time stepping for full systems and reduced scalar SDEs.

Runs are split into chunks.  Chunk ``c`` of a run with seed ``s`` is an
independent trajectory (own burn-in) driven by the stream ``(s, c)``, and
noise is drawn in fixed-size blocks, so the output depends only on the
model, the config and the seed.  Threads merely run chunks concurrently.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _backend
from ._kernels_py import full_stiff, full_substeps
from .reduction import LApprox, NPlusApprox
from .sde_models import FastSlowSystem, PolyAbs, RationalForm, ScalarSDE
from .stable_noise import (StableParams, cpp_decompose, make_rng, sample_cpp_block,
                           sample_increments)

__all__ = [
    "SCHEMES",
    "SimConfig",
    "SampleSeries",
    "SimulationAborted",
    "euler_step",
    "predictor_corrector_step",
    "marcus_step_closed",
    "marcus_step_numeric",
    "jump_map",
    "simulate",
    "simulate_l_transient",
    "stratonovich_reference",
    "write_series_csv",
    "read_series_csv",
]

SCHEMES = ("euler", "predictor_corrector", "marcus_closed", "marcus_numeric")
_SCHEME_CODE = {"euler": 0, "predictor_corrector": 1, "marcus_closed": 2}
BLOCK_SAMPLES = 1024
# drift steps moving z by more than GUARD * max(1, |z|) are split into substeps
GUARD = 0.5
MAX_SUBSTEPS = 1048576.0


class SimulationAborted(RuntimeError):
    """A trajectory produced a non-finite state."""

    def __init__(self, chunk, time, last_value):
        self.chunk = chunk
        self.time = time
        self.last_value = last_value
        super().__init__(f"non-finite state in chunk {chunk} at t = {time:.6g} "
                         f"(last recorded finite value {last_value!r})")


@dataclass(frozen=True)
class SimConfig:
    delta_t: float
    sample_Dt: float
    n_samples: int
    burn_in: float = 10.0
    seed: int = 0
    scheme: str = "euler"
    marcus_substeps_M: int = 64
    n_chunks: int = 1

    def __post_init__(self):
        if not (self.delta_t > 0 and self.sample_Dt > 0):
            raise ValueError("delta_t and sample_Dt must be positive")
        if self.delta_t > self.sample_Dt * (1 + 1e-12):
            raise ValueError("delta_t must not exceed sample_Dt")
        ratio = self.sample_Dt / self.delta_t
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError(f"sample_Dt/delta_t = {ratio} is not an integer")
        if self.n_samples < 1 or self.n_chunks < 1 or self.n_chunks > self.n_samples:
            raise ValueError("need n_samples >= n_chunks >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.marcus_substeps_M < 1:
            raise ValueError("marcus_substeps_M must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def stride(self) -> int:
        return int(round(self.sample_Dt / self.delta_t))

    @property
    def burn_samples(self) -> int:
        return int(math.ceil(self.burn_in / self.sample_Dt - 1e-9))

    def chunk_sizes(self):
        base, rem = divmod(self.n_samples, self.n_chunks)
        return [base + 1] * rem + [base] * (self.n_chunks - rem)


@dataclass
class SampleSeries:
    values: np.ndarray
    sample_Dt: float
    t0: float
    seed: int
    provenance: dict = field(default_factory=dict)
    delta_t: Optional[float] = None
    chunk_lengths: tuple = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not self.chunk_lengths:
            self.chunk_lengths = (len(self.values),)

    def __len__(self):
        return len(self.values)

    @property
    def times(self):
        return self.t0 + self.sample_Dt * np.arange(len(self.values))

    def chunks(self):
        """Per-chunk views (trajectories are only contiguous inside a chunk)."""
        out, i = [], 0
        for n in self.chunk_lengths:
            out.append(self.values[i:i + n])
            i += n
        return out

    def to_csv(self, path):
        write_series_csv(self, path)


def write_series_csv(series: SampleSeries, path) -> None:
    data = np.column_stack([series.times, series.values])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header="t,value", comments="")


def read_series_csv(path, seed: int = 0) -> SampleSeries:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    if data.shape[0] < 2:
        raise ValueError(f"{path}: need at least two samples")
    dt = float(data[1, 0] - data[0, 0])
    return SampleSeries(data[:, 1], dt, float(data[0, 0]), seed, {"source": str(path)})


# ---------------------------------------------------------------- single steps

def _kappa_terms(sde: ScalarSDE, z):
    k = sde.noise_coeff(z)
    if sde.wong_zakai:
        return k, sde.wong_zakai * k * sde.kappa_prime()(z)
    return k, 0.0


def euler_step(sde: ScalarSDE, z, dL, delta_t):
    """``z + (H + wz*kappa*kappa') dt + kappa(z) dL``."""
    if sde.interpretation == "marcus":
        raise ValueError("euler_step expects an Ito or deterministic SDE")
    k, corr = _kappa_terms(sde, z)
    return z + (sde.drift(z) + corr) * delta_t + k * dL


def predictor_corrector_step(sde: ScalarSDE, z, dL, delta_t):
    """Heun average of the drift with the Euler noise term."""
    if sde.interpretation == "marcus":
        raise ValueError("predictor_corrector_step expects an Ito or deterministic SDE")
    k, corr = _kappa_terms(sde, z)
    h = sde.drift(z) + corr
    zp = z + h * delta_t + k * dL
    _, corr_p = _kappa_terms(sde, zp)
    return z + 0.5 * (h + sde.drift(zp) + corr_p) * delta_t + k * dL


def marcus_step_closed(sde: ScalarSDE, z, dL, delta_t):
    """Drift step followed by the exact jump flow ``theta(1; dL, .)``."""
    if sde.marcus_map is None:
        raise ValueError("marcus_step_closed needs a closed-form marcus_map")
    zd = z + sde.drift(z) * delta_t
    if np.ndim(zd) == 0:
        return sde.marcus_map(1.0, float(dL), float(zd))
    return np.array([sde.marcus_map(1.0, float(d), float(v))
                     for v, d in zip(np.ravel(zd), np.broadcast_to(dL, np.shape(zd)).ravel())]
                    ).reshape(np.shape(zd))


def jump_map(sde: ScalarSDE, z: float, jump: float, M: int = 64) -> float:
    """Marcus flow over one jump with ``M`` explicit Euler substeps."""
    du = 1.0 / M
    th = float(z)
    for _ in range(M):
        th = th + jump * float(sde.noise_coeff(th)) * du
    return th


def marcus_step_numeric(sde: ScalarSDE, z: float, gaussian_part: float, jumps, delta_t: float,
                        M: int = 64) -> float:
    """One step of the decomposed Marcus scheme.

    ``gaussian_part`` is the eta*dW draw of the decomposition; jumps are
    applied one after another, each through :func:`jump_map`.
    """
    if sde.beta != 0.0:
        raise ValueError("numeric Marcus steps require symmetric noise (beta = 0)")
    eta = cpp_decompose(sde.alpha).eta
    z = float(z)
    k = float(sde.noise_coeff(z))
    kp = float(sde.kappa_prime()(z))
    zn = z + (float(sde.drift(z)) + 0.5 * eta * eta * k * kp) * delta_t + k * gaussian_part
    zj = z
    for j in jumps:
        zj = jump_map(sde, zj, j, M)
    return zn + (zj - z)


def stratonovich_reference(sde: ScalarSDE) -> ScalarSDE:
    """Ito SDE equivalent to a Gaussian-driven (alpha = 2) Marcus SDE.

    With ``L = sqrt(2) W`` the Stratonovich correction is ``kappa*kappa'``.
    """
    if sde.alpha != 2.0:
        raise ValueError("the Stratonovich reference only applies at alpha = 2")
    return replace(sde, interpretation="ito", wong_zakai=1.0, marcus_map=None,
                   name=sde.name + "/ito+wz")


# ---------------------------------------------------------------- run planning

def _fit_table(fns):
    rows = []
    for f in fns:
        p = f if isinstance(f, PolyAbs) else PolyAbs.fit(f)
        if p is None:
            return None
        rows.append(p.coef)
    return np.array(rows, dtype=float)


class _Plan:
    """Everything needed to advance a group of chunks block by block."""

    def __init__(self, model, config: SimConfig):
        self.config = config
        self.kind = None
        self.label = ""
        if isinstance(model, LApprox):
            model = model.stationary_sde()
        elif isinstance(model, NPlusApprox):
            model = model.sde
        self.model = model
        scheme = config.scheme
        if isinstance(model, FastSlowSystem):
            if scheme not in ("euler", "predictor_corrector"):
                raise ValueError("full systems are stepped with euler or predictor_corrector")
            s = model
            self.kind = "full"
            self.label = s.name
            self.alpha, self.beta = s.alpha, s.beta
            self.table = s.coef_table()
            if self.table is None:
                self.table = _fit_table((s.f1, s.f2, s.g1, s.g2))
            self.prm = (s.epsilon ** (-s.gamma), s.epsilon ** s.gamma, 1.0 / s.epsilon,
                        s.noise_y, config.delta_t)
            self.init = (float(s.x0), float(s.y0))
            fast = s.epsilon / max(abs(float(s.g2(s.x0))), 1e-300)
            if config.delta_t > fast / 10 * (1 + 1e-9):
                import warnings
                warnings.warn(f"delta_t = {config.delta_t} does not resolve the fast timescale "
                              f"{fast:.3g} (want <= {fast / 10:.3g})", RuntimeWarning,
                              stacklevel=3)
            self.noise = "stable"
        elif isinstance(model, ScalarSDE):
            sde = model
            self.label = sde.name
            self.alpha, self.beta = sde.alpha, sde.beta
            self.init = (float(sde.z0),)
            form = sde.kernel_form
            self.table = None if form is None else form.array()
            self.scale = 0.0 if form is None else form.scale
            self.wz = float(sde.wong_zakai)
            self.map_kind, self.map_k = 0, 0.0
            if sde.interpretation == "marcus" and scheme in ("euler", "predictor_corrector"):
                raise ValueError(f"scheme {scheme!r} ignores the Marcus interpretation; "
                                 "use marcus_closed or marcus_numeric")
            if scheme == "marcus_closed":
                kind = None if form is None else form.map_kind()
                if kind is not None:
                    self.map_kind = 0 if kind[0] == "additive" else 1
                    self.map_k = kind[1]
                else:
                    if sde.marcus_map is None:
                        raise ValueError("marcus_closed needs a closed-form marcus_map")
                    self.table = None
            if scheme == "marcus_numeric":
                if sde.beta != 0.0:
                    raise ValueError("marcus_numeric supports beta = 0 only")
                self.decomp = cpp_decompose(sde.alpha)
                self.noise = "cpp"
                self.kind = "numeric"
            else:
                self.noise = "none" if sde.interpretation == "deterministic" else "stable"
                self.kind = "reduced"
        else:
            raise TypeError(f"cannot simulate {type(model).__name__}")
        if self.noise == "stable":
            self.step_params = StableParams.for_step(self.alpha, self.beta, config.delta_t)

    # noise ------------------------------------------------------------------
    def draw(self, rng, n_steps):
        if self.noise == "stable":
            return sample_increments(self.step_params, rng, n_steps)
        if self.noise == "none":
            return np.zeros(n_steps)
        return sample_cpp_block(self.decomp, self.config.delta_t, rng, n_steps)

    # stepping ---------------------------------------------------------------
    def advance(self, state, noises, out, fail, guarded):
        cfg = self.config
        K = _backend.kernels
        stride = cfg.stride
        if self.kind == "full":
            dL = np.ascontiguousarray(np.vstack(noises))
            if self.table is not None:
                K.run_full(self.table, self.prm, _SCHEME_CODE[cfg.scheme], stride, state, dL, out,
                           fail, guarded)
            else:
                _run_full_callable(self.model, self.prm, cfg.scheme, stride, state, dL, out, fail,
                                   guarded)
        elif self.kind == "reduced":
            dL = np.ascontiguousarray(np.vstack(noises))
            prm = (self.scale, self.wz, self.map_k, cfg.delta_t)
            if self.table is not None:
                K.run_reduced(self.table, prm, self.map_kind, _SCHEME_CODE[cfg.scheme], stride,
                              state, dL, out, fail, guarded)
            else:
                _run_reduced_callable(self.model, cfg.scheme, stride, state, dL, out, fail,
                                      guarded, cfg.delta_t)
        else:
            dW = np.ascontiguousarray(np.vstack([n[0] for n in noises]))
            counts = np.ascontiguousarray(np.vstack([n[1] for n in noises]))
            width = max(1, max(len(n[2]) for n in noises))
            jumps = np.zeros((len(noises), width))
            for p, n in enumerate(noises):
                jumps[p, :len(n[2])] = n[2]
            prm = (self.scale, self.decomp.eta, cfg.delta_t)
            if self.table is not None:
                K.run_marcus_numeric(self.table, prm, cfg.marcus_substeps_M, stride, state, dW,
                                     counts, jumps, out, fail)
            else:
                _run_numeric_callable(self.model, self.decomp.eta, cfg.marcus_substeps_M, stride,
                                      state, dW, counts, jumps, out, fail, cfg.delta_t)

    def new_state(self, n_paths):
        if self.kind == "full":
            return np.tile(np.array(self.init, dtype=float), (n_paths, 1))
        return np.full(n_paths, self.init[0], dtype=float)


def _run_full_callable(s, prm, scheme, stride, state, dL, out, fail, guarded):
    eng, eg, ie, ny, dt = prm
    heun = scheme == "predictor_corrector"
    x, y = state[:, 0].copy(), state[:, 1].copy()

    def rhs(x, y):
        return s.f1(x) + eng * s.f2(x) * y, (eg * s.g1(x) + s.g2(x) * y) * ie

    def g2(x):
        return s.g2(x) * np.ones_like(x)

    with np.errstate(all="ignore"):
        for i in range(dL.shape[1]):
            noise = ny * dL[:, i]
            fx, fy = rhs(x, y)
            bad = full_stiff(g2(x), ie, x, fx, dt)
            if heun:
                xp, yp = x + fx * dt, y + fy * dt + noise
                fxp, fyp = rhs(xp, yp)
                bad |= full_stiff(g2(xp), ie, xp, fxp, dt)
                xn, yn = x + 0.5 * (fx + fxp) * dt, y + 0.5 * (fy + fyp) * dt + noise
            else:
                xn, yn = x + fx * dt, y + fy * dt + noise
            for p in np.nonzero(bad)[0]:
                xs, ys = full_substeps(rhs, s.g2, ie, float(x[p]), float(y[p]), dt, heun)
                xn[p], yn[p] = xs, ys + noise[p]
                guarded[p] += 1
            x, y = xn, yn
            bad = ~(np.isfinite(x) & np.isfinite(y)) & (fail < 0)
            fail[bad] = i
            if (i + 1) % stride == 0:
                out[:, (i + 1) // stride - 1] = x
    state[:, 0], state[:, 1] = x, y


def _callable_substeps(sde, z, h, dt, heun):
    m = float(np.ceil(abs(h) * dt / (GUARD * max(1.0, abs(z)))))
    if not m >= 1.0:
        m = 1.0
    m = min(m, MAX_SUBSTEPS)
    tau = dt / m
    for _ in range(int(m)):
        hn = _total_drift(sde, z)
        z = z + (0.5 * (hn + _total_drift(sde, z + hn * tau)) if heun else hn) * tau
    return z


def _total_drift(sde, z):
    k, corr = _kappa_terms(sde, z)
    return sde.drift(z) + corr


def _run_reduced_callable(sde, scheme, stride, state, dL, out, fail, guarded, dt):
    if scheme != "marcus_closed" and sde.interpretation == "marcus":
        raise ValueError("Marcus SDE needs a Marcus scheme")
    heun = scheme == "predictor_corrector"
    z = state.copy()
    with np.errstate(all="ignore"):
        for i in range(dL.shape[1]):
            if scheme == "marcus_closed":
                zn = np.asarray(marcus_step_closed(sde, z, dL[:, i], dt), dtype=float)
                h = np.asarray(sde.drift(z), dtype=float) * np.ones_like(z)
            else:
                step = predictor_corrector_step if heun else euler_step
                zn = np.asarray(step(sde, z, dL[:, i], dt), dtype=float) * np.ones_like(z)
                h = np.asarray(_total_drift(sde, z), dtype=float) * np.ones_like(z)
            bad = np.abs(h) * dt > GUARD * np.maximum(1.0, np.abs(z))
            if heun:
                k = np.asarray(sde.noise_coeff(z), dtype=float) * np.ones_like(z)
                zp = z + h * dt + k * dL[:, i]
                hp = np.asarray(_total_drift(sde, zp), dtype=float) * np.ones_like(z)
                bad |= np.abs(hp) * dt > GUARD * np.maximum(1.0, np.abs(zp))
            for p in np.nonzero(bad)[0]:
                zd = _callable_substeps(sde, float(z[p]), float(h[p]), dt, heun)
                if scheme == "marcus_closed":
                    zn[p] = sde.marcus_map(1.0, float(dL[p, i]), zd)
                else:
                    zn[p] = zd + float(sde.noise_coeff(z[p])) * dL[p, i]
                guarded[p] += 1
            z = zn
            bad = ~np.isfinite(z) & (fail < 0)
            fail[bad] = i
            if (i + 1) % stride == 0:
                out[:, (i + 1) // stride - 1] = z
    state[:] = z


def _run_numeric_callable(sde, eta, M, stride, state, dW, counts, jumps, out, fail, dt):
    z = state.copy()
    pos = np.zeros(len(z), dtype=np.int64)
    kp = sde.kappa_prime()
    with np.errstate(all="ignore"):
        for i in range(dW.shape[1]):
            k = sde.noise_coeff(z)
            zn = z + (sde.drift(z) + 0.5 * eta * eta * k * kp(z)) * dt + eta * k * dW[:, i]
            for p in np.nonzero(counts[:, i])[0]:
                zj = z[p]
                for q in range(pos[p], pos[p] + counts[p, i]):
                    zj = jump_map(sde, zj, jumps[p, q], M)
                pos[p] += counts[p, i]
                zn[p] += zj - z[p]
            z = zn
            bad = ~np.isfinite(z) & (fail < 0)
            fail[bad] = i
            if (i + 1) % stride == 0:
                out[:, (i + 1) // stride - 1] = z
    state[:] = z


def _run_group(plan: _Plan, chunks, sizes):
    """Advance the chunks in ``chunks`` together; returns their recorded samples."""
    cfg = plan.config
    stride, burn = cfg.stride, cfg.burn_samples
    totals = [burn + n for n in sizes]
    rngs = [make_rng(cfg.seed, c) for c in chunks]
    P = len(chunks)
    state = plan.new_state(P)
    results = [np.empty(n) for n in sizes]
    guarded = np.zeros(P, dtype=np.int64)
    last = [plan.init[0]] * P
    s0 = 0
    while s0 < max(totals):
        nb_max = min(BLOCK_SAMPLES, max(totals) - s0)
        noises = []
        for p in range(P):
            nb = min(BLOCK_SAMPLES, totals[p] - s0)
            if nb <= 0:
                noises.append(plan.draw(rngs[p], 0) if plan.noise != "cpp" else
                              (np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0)))
                nb = 0
            else:
                noises.append(plan.draw(rngs[p], nb * stride))
            noises[-1] = _pad(noises[-1], nb_max * stride)
        out = np.empty((P, nb_max))
        fail = np.full(P, -1, dtype=np.int64)
        plan.advance(state, noises, out, fail, guarded)
        for p in range(P):
            nb = min(nb_max, totals[p] - s0)
            if nb <= 0:
                continue
            if 0 <= fail[p] < nb * stride:
                t = (s0 * stride + fail[p]) * cfg.delta_t
                raise SimulationAborted(chunks[p], t, last[p])
            lo = max(0, burn - s0)
            if lo < nb:
                dst = s0 + lo - burn
                results[p][dst:dst + nb - lo] = out[p, lo:nb]
            last[p] = float(out[p, nb - 1])
        s0 += nb_max
    return results, int(guarded.sum())


def _pad(noise, n_steps):
    if isinstance(noise, tuple):
        dw, counts, jumps = noise
        if len(dw) < n_steps:
            dw = np.concatenate([dw, np.zeros(n_steps - len(dw))])
            counts = np.concatenate([counts, np.zeros(n_steps - len(counts), dtype=np.int64)])
        return dw, counts, jumps
    if len(noise) < n_steps:
        return np.concatenate([noise, np.zeros(n_steps - len(noise))])
    return noise


def simulate(model, config: SimConfig, threads: Optional[int] = None) -> SampleSeries:
    """Run ``model`` (full system, reduced model or scalar SDE) under ``config``.

    The result is bit-identical for any ``threads``.
    """
    plan = _Plan(model, config)
    sizes = config.chunk_sizes()
    chunks = list(range(config.n_chunks))
    threads = threads or int(os.environ.get("LEVYAVG_THREADS", "1"))
    vector = _backend.name == "python" or plan.table is None
    if vector:
        results, n_guarded = _run_group(plan, chunks, sizes)
    else:
        def one(cn):
            res, g = _run_group(plan, [cn[0]], [cn[1]])
            return res[0], g

        if threads <= 1 or len(chunks) == 1:
            parts = [one(cn) for cn in zip(chunks, sizes)]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(one, zip(chunks, sizes)))
        results = [r for r, _ in parts]
        n_guarded = sum(g for _, g in parts)
    values = np.concatenate(results)
    prov = {"model": plan.label, "kind": plan.kind, "scheme": config.scheme,
            "backend": _backend.name, "guarded_steps": n_guarded}
    t0 = (config.burn_samples + 1) * config.sample_Dt
    return SampleSeries(values, config.sample_Dt, t0, int(config.seed), prov, config.delta_t,
                        tuple(sizes))


def simulate_l_transient(lapprox: LApprox, config: SimConfig) -> SampleSeries:
    """(L) run started at x0 with the anchor following the averaged trajectory.

    Each chunk is one path from t = 0 (no burn-in).  The slope and noise
    scale are refreshed at every sampling step.
    """
    s = lapprox.system
    cfg = config
    stride = cfg.stride
    sizes = cfg.chunk_sizes()
    from .sde_models import f_bar, f_bar_derivative
    out = []
    for c, n in enumerate(sizes):
        rng = make_rng(cfg.seed, c)
        xbar, xi = float(s.x0), 0.0
        params = StableParams.for_step(s.alpha, s.beta, cfg.delta_t)
        vals = np.empty(n)
        for j in range(n):
            slope = float(f_bar_derivative(s, xbar))
            f2v = float(s.f2(xbar))
            scale = float(lapprox.noise_scale_at(xbar))
            sign = 1.0 if f2v >= 0 else -1.0
            dL = sample_increments(params, rng, stride) * sign
            for i in range(stride):
                h = cfg.delta_t
                k1 = float(f_bar(s, xbar))
                k2 = float(f_bar(s, xbar + 0.5 * h * k1))
                k3 = float(f_bar(s, xbar + 0.5 * h * k2))
                k4 = float(f_bar(s, xbar + h * k3))
                xi = xi + slope * xi * h + scale * dL[i]
                xbar = xbar + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            if not math.isfinite(xi + xbar):
                raise SimulationAborted(c, (j + 1) * cfg.sample_Dt, vals[j - 1] if j else s.x0)
            vals[j] = xbar + xi
        out.append(vals)
    prov = {"model": f"{s.name}/L-transient", "kind": "transient", "scheme": "euler",
            "backend": "python"}
    return SampleSeries(np.concatenate(out), cfg.sample_Dt, cfg.sample_Dt, int(cfg.seed), prov,
                        cfg.delta_t, tuple(sizes))
