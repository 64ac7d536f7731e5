"""Command-line harness.

Subcommands: ``noise-validate``, ``simulate``, ``compare``, ``cf-check`` and
``plan``.  Exit codes: 0 pass, 1 threshold failure, 2 usage or
configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import hashlib
import io
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, _backend
from .asymptotics import (CfContext, QuadratureError, cf_integral_asymptotic,
                          cf_integral_quadrature, convergence_slope)
from .integrators import (SCHEMES, SimConfig, SimulationAborted, read_series_csv, simulate,
                          write_series_csv)
from .reduction import a_approx, l_approx, n_plus_approx
from .sde_models import BUILTIN_SYSTEMS, FastSlowSystem, PolyAbs
from .stable_noise import StableParams, check_alpha, make_rng, sample_increments, stable_cf
from .stats import (autocodifference, count_modes, empirical_cf, histogram_pdf, ks_distance,
                    plan_sample_size, tail_mass, write_af_csv, write_density_csv)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3

SYSTEMS = ("linear", "nonlinear1", "nonlinear2", "nonlinear3", "custom")
MODELS = ("full", "A", "L", "nplus")
ANALYSES = ("density", "af", "cf_check", "compare")
SYSTEM_KEYS = ("a", "b", "c", "epsilon", "alpha", "beta", "x0", "y0", "gamma")
FUNCTION_KEYS = ("f1", "f2", "g1", "g2")
RUN_KEYS = {"delta_t": float, "sample_Dt": float, "n_samples": int, "burn_in": float,
            "seed": int, "scheme": str, "marcus_substeps_M": int, "n_chunks": int}
DESK_SAMPLES = 10 ** 6
LARGE_SAMPLES = 10 ** 8
SAMPLES_PER_CHUNK = 125_000
WATERMARK = "UNSUPPORTED: alpha < 1 lies outside the analysed range; no correctness guarantee"


class UsageError(Exception):
    pass


# ------------------------------------------------------------- expressions

_FUNCS = {"abs": np.abs, "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "sin": np.sin,
          "cos": np.cos, "tan": np.tan, "tanh": np.tanh, "sinh": np.sinh, "cosh": np.cosh,
          "sign": np.sign}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.true_divide, ast.Pow: np.power}


class Expression:
    """Arithmetic expression in ``x`` built from a whitelisted syntax tree.

    Allowed: numbers, ``x``, ``pi``, ``e``, + - * / ** and the functions in
    ``_FUNCS``.  Anything else is rejected at parse time.
    """

    def __init__(self, text: str):
        self.text = text.strip()
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise UsageError(f"cannot parse expression {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise UsageError(f"only numeric constants allowed in {self.text!r}")
        elif isinstance(node, ast.Name):
            if node.id != "x" and node.id not in _CONSTS:
                raise UsageError(f"unknown name {node.id!r} in {self.text!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise UsageError(f"operator not allowed in {self.text!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise UsageError(f"operator not allowed in {self.text!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS) \
                    or node.keywords or len(node.args) != 1:
                raise UsageError(f"only one-argument calls of {sorted(_FUNCS)} are allowed")
            self._check(node.args[0])
        else:
            raise UsageError(f"syntax {type(node).__name__} not allowed in {self.text!r}")

    def _eval(self, node, x):
        if isinstance(node, ast.Constant):
            return float(node.value) + 0.0 * x
        if isinstance(node, ast.Name):
            return x if node.id == "x" else _CONSTS[node.id] + 0.0 * x
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, x), self._eval(node.right, x))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, x)
            return -v if isinstance(node.op, ast.USub) else v
        return _FUNCS[node.func.id](self._eval(node.args[0], x))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, x)
        return out[()] if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"Expression({self.text!r})"


# ------------------------------------------------------------------ config

@dataclass
class ExperimentConfig:
    system: str = "linear"
    params: dict = field(default_factory=dict)
    functions: dict = field(default_factory=dict)
    model: str = "full"
    run: dict = field(default_factory=dict)
    analyses: tuple = ("density",)
    options: dict = field(default_factory=dict)
    output_dir: str = ""

    def validate(self):
        if self.system not in SYSTEMS:
            raise UsageError(f"system must be one of {SYSTEMS}, got {self.system!r}")
        if self.model not in MODELS:
            raise UsageError(f"model must be one of {MODELS}, got {self.model!r}")
        bad = set(self.params) - set(SYSTEM_KEYS)
        if bad:
            raise UsageError(f"unknown system parameter(s): {sorted(bad)}")
        bad = set(self.run) - set(RUN_KEYS)
        if bad:
            raise UsageError(f"unknown run setting(s): {sorted(bad)}")
        bad = set(self.analyses) - set(ANALYSES)
        if bad:
            raise UsageError(f"unknown analyses: {sorted(bad)}; choose from {ANALYSES}")
        if self.system == "custom":
            missing = [k for k in FUNCTION_KEYS if k not in self.functions]
            if missing:
                raise UsageError(f"custom system needs expressions for {missing}")
        elif self.functions:
            raise UsageError("f1/f2/g1/g2 expressions are only used with system = custom")
        if "scheme" in self.run and self.run["scheme"] not in SCHEMES:
            raise UsageError(f"scheme must be one of {SCHEMES}")
        return self

    # text form ------------------------------------------------------------
    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        sysd = {"name": self.system}
        sysd.update({k: repr(float(v)) for k, v in sorted(self.params.items())})
        sysd.update({k: self.functions[k] for k in FUNCTION_KEYS if k in self.functions})
        cp["system"] = sysd
        rund = {"model": self.model}
        for k in RUN_KEYS:
            if k in self.run:
                v = self.run[k]
                rund[k] = repr(float(v)) if RUN_KEYS[k] is float else str(v)
        if self.output_dir:
            rund["output_dir"] = self.output_dir
        cp["run"] = rund
        ana = {"list": ", ".join(self.analyses)}
        ana.update({k: str(v) for k, v in sorted(self.options.items())})
        cp["analyses"] = ana
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise UsageError(f"malformed config: {exc}") from None
        unknown = set(cp.sections()) - {"system", "run", "analyses"}
        if unknown:
            raise UsageError(f"unknown config section(s): {sorted(unknown)}")
        cfg = cls()
        if cp.has_section("system"):
            s = dict(cp["system"])
            cfg.system = s.pop("name", cfg.system)
            for k in FUNCTION_KEYS:
                if k in s:
                    cfg.functions[k] = s.pop(k)
            cfg.params = {k: _num(k, v, float) for k, v in s.items()}
        if cp.has_section("run"):
            r = dict(cp["run"])
            cfg.model = r.pop("model", cfg.model)
            cfg.output_dir = r.pop("output_dir", "")
            for k, v in r.items():
                if k not in RUN_KEYS:
                    raise UsageError(f"unknown run setting {k!r}")
                cfg.run[k] = v if RUN_KEYS[k] is str else _num(k, v, RUN_KEYS[k])
        if cp.has_section("analyses"):
            a = dict(cp["analyses"])
            lst = a.pop("list", "")
            cfg.analyses = tuple(x.strip() for x in lst.split(",") if x.strip())
            cfg.options = {k: _option(k, v) for k, v in a.items()}
        return cfg.validate()


OPTION_TYPES = {"n_bins": int, "max_lag": float, "compare_with": str, "ks_threshold": float,
                "af_threshold": float, "ks_stride": int, "range_lo": float, "range_hi": float,
                "write_series": str}


def _num(key, text, kind):
    try:
        return kind(float(text)) if kind is int and "e" in text.lower() else kind(text)
    except ValueError:
        raise UsageError(f"{key} = {text!r} is not a valid {kind.__name__}") from None


def _option(key, text):
    if key not in OPTION_TYPES:
        raise UsageError(f"unknown analysis option {key!r}; known: {sorted(OPTION_TYPES)}")
    return _num(key, text, OPTION_TYPES[key])


# ----------------------------------------------------------- model set-up

def build_system(cfg: ExperimentConfig, allow_unsupported: bool = False) -> FastSlowSystem:
    alpha = cfg.params.get("alpha")
    if alpha is not None:
        try:
            check_alpha(alpha, allow_below_one=allow_unsupported)
        except ValueError as exc:
            hint = " (pass --allow-unsupported-alpha to run anyway)" if 0 < alpha < 1 else ""
            raise UsageError(f"{exc}{hint}") from None
    if cfg.system == "custom":
        p = dict(cfg.params)
        alpha = p.get("alpha", 1.7)
        fns = {k: _as_function(cfg.functions[k]) for k in FUNCTION_KEYS}
        gamma = p.get("gamma", 1.0 - 1.0 / alpha)
        return FastSlowSystem(epsilon=p.get("epsilon", 0.01), gamma=gamma, b=p.get("b", 1.0),
                              alpha=alpha, beta=p.get("beta", 0.0), x0=p.get("x0", 0.0),
                              y0=p.get("y0", 0.0), name="custom", params=p, **fns)
    factory = BUILTIN_SYSTEMS[cfg.system]["factory"]
    import inspect
    accepted = set(inspect.signature(factory).parameters)
    bad = set(cfg.params) - accepted
    if bad:
        raise UsageError(f"system {cfg.system} has no parameter(s) {sorted(bad)}; "
                         f"accepted: {sorted(accepted)}")
    return factory(**cfg.params)


def _as_function(text):
    expr = Expression(text)
    poly = PolyAbs.fit(expr)
    return poly if poly is not None else expr


def build_model(cfg: ExperimentConfig, system: FastSlowSystem):
    if cfg.model == "full":
        return system
    if cfg.model == "A":
        return a_approx(system)
    if cfg.model == "L":
        return l_approx(system)
    return n_plus_approx(system)


def resolve_run(cfg: ExperimentConfig, system: FastSlowSystem, large_scale=False) -> SimConfig:
    """Fill unset run fields with the per-system defaults."""
    r = dict(cfg.run)
    entry = BUILTIN_SYSTEMS.get(cfg.system)
    r.setdefault("sample_Dt", 0.01)
    if cfg.model == "full":
        if entry is not None:
            r.setdefault("delta_t", entry["full_dt"])
            r.setdefault("scheme", entry["full_scheme"])
        else:
            # smallest stride >= 10 that resolves the fast timescale
            fast = system.epsilon / max(abs(float(system.g2(system.x0))), 1e-12)
            stride = max(10, math.ceil(10.0 * r["sample_Dt"] / fast))
            r.setdefault("delta_t", r["sample_Dt"] / stride)
            r.setdefault("scheme", "euler")
    else:
        r.setdefault("delta_t", r["sample_Dt"])
        if cfg.model == "nplus":
            if entry is not None:
                r.setdefault("scheme", entry["nplus_scheme"])
        r.setdefault("scheme", "euler")
    n_default = LARGE_SAMPLES if large_scale else DESK_SAMPLES
    r.setdefault("n_samples", n_default)
    r.setdefault("n_chunks", max(1, min(r["n_samples"], r["n_samples"] // SAMPLES_PER_CHUNK)))
    try:
        return SimConfig(**r)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid run settings: {exc}") from None


def _nplus_scheme_for(model, scheme):
    """Custom (N+) models without a closed map fall back to numeric Marcus steps."""
    sde = model.sde
    if sde.interpretation == "marcus" and scheme == "euler":
        if sde.marcus_map is not None or (sde.kernel_form is not None
                                          and sde.kernel_form.map_kind() is not None):
            return "marcus_closed"
        return "marcus_numeric"
    return scheme


# --------------------------------------------------------------- artifacts

class Outputs:
    def __init__(self, directory, watermark=False):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = {}
        self.watermark = watermark

    def path(self, name):
        return self.dir / name

    def register(self, name):
        p = self.path(name)
        if self.watermark:
            text = p.read_text()
            p.write_text(f"# {WATERMARK}\n{text}")
        self.files[name] = hashlib.sha256(p.read_bytes()).hexdigest()

    def manifest(self, payload):
        payload = dict(payload)
        payload["files"] = dict(sorted(self.files.items()))
        payload["levyavg_version"] = __version__
        payload["backend"] = _backend.name
        if self.watermark:
            payload["watermark"] = WATERMARK
        with open(self.path("manifest.json"), "w") as fh:
            json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _output_dir(arg, cfg_dir=""):
    return arg or cfg_dir or os.environ.get("LEVYAVG_OUTPUT_DIR") or "levyavg_out"


# ------------------------------------------------------------ subcommands

def cmd_noise_validate(args) -> int:
    alpha = check_alpha(args.alpha, allow_below_one=args.allow_unsupported_alpha)
    rng = make_rng(args.seed, 0)
    unit = sample_increments(StableParams(alpha, args.beta, 1.0), rng, args.n)
    k = np.linspace(-args.kmax, args.kmax, args.points)
    emp = empirical_cf(unit, k)
    ref = stable_cf(k, StableParams(alpha, args.beta, 1.0))
    err = np.abs(emp - ref)
    out = Outputs(_output_dir(args.out), watermark=alpha < 1)
    name = f"noise_cf_alpha{alpha:g}_beta{args.beta:g}.csv"
    np.savetxt(out.path(name), np.column_stack([k, emp.real, emp.imag, ref.real, ref.imag, err]),
               fmt="%.17g", delimiter=",", header="k,emp_re,emp_im,ref_re,ref_im,abs_err",
               comments="")
    out.register(name)
    ok = bool(err.max() < args.tol)
    report = {"command": "noise-validate", "alpha": alpha, "beta": args.beta, "n": args.n,
              "seed": args.seed, "max_cf_error": float(err.max()), "tolerance": args.tol}
    print(f"seed = {args.seed}")
    print(f"max |empirical CF - analytic CF| = {err.max():.3e} (tolerance {args.tol:g})")
    if alpha == 2.0:
        inc = sample_increments(StableParams.for_step(alpha, 0.0, args.dt), make_rng(args.seed, 1),
                                args.n)
        var = float(np.var(inc))
        rel = abs(var / (2 * args.dt) - 1)
        ok = ok and rel < 0.01
        report.update(variance=var, variance_target=2 * args.dt, variance_rel_error=rel)
        print(f"variance of dt = {args.dt:g} increments: {var:.6g} (2*dt = {2 * args.dt:.6g}, "
              f"relative error {rel:.2%})")
    report["pass"] = ok
    out.manifest(report)
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        cfg = ExperimentConfig.from_text(text)
    else:
        cfg = ExperimentConfig()
    if args.system:
        cfg.system = args.system
    if getattr(args, "model", None):
        cfg.model = args.model
    for k in SYSTEM_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            cfg.params[k] = v
    for k in FUNCTION_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            cfg.functions[k] = v
    for k in RUN_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            cfg.run[k] = v
    if getattr(args, "analyses", None):
        cfg.analyses = tuple(a.strip() for a in args.analyses.split(",") if a.strip())
    return cfg.validate()


def _watermarked(cfg, args):
    alpha = cfg.params.get("alpha")
    return alpha is not None and alpha < 1 and args.allow_unsupported_alpha


def _run_model(cfg, system, args, model_name=None):
    c = replace(cfg, model=model_name or cfg.model)
    model = build_model(c, system)
    run = resolve_run(c, system, args.paper_scale)
    if c.model == "nplus":
        scheme = _nplus_scheme_for(model, run.scheme)
        if scheme != run.scheme and "scheme" not in cfg.run:
            run = replace(run, scheme=scheme)
    series = simulate(model, run, threads=args.threads)
    return series, run


def _density_range(cfg, *series):
    lo, hi = cfg.options.get("range_lo"), cfg.options.get("range_hi")
    if lo is None or hi is None:
        pooled = np.concatenate([s.values for s in series])
        qlo, qhi = np.quantile(pooled, [0.005, 0.995])
        lo = qlo if lo is None else lo
        hi = qhi if hi is None else hi
    return float(lo), float(hi)


def _analyse(cfg, series, tag, out, rng_range, report):
    n_bins = int(cfg.options.get("n_bins", 100))
    if "density" in cfg.analyses:
        d = histogram_pdf(series, n_bins, rng_range)
        name = f"{tag}_density.csv"
        write_density_csv(d, out.path(name))
        out.register(name)
        report["modes"] = count_modes(series)
        report["out_of_range"] = [d.n_below, d.n_above]
    if "af" in cfg.analyses:
        lag = int(round(float(cfg.options.get("max_lag", 4.0)) / series.sample_Dt))
        lag = min(lag, len(series) // 100)
        af = autocodifference(series, lag)
        name = f"{tag}_af.csv"
        write_af_csv(af, out.path(name))
        out.register(name)
        report["af_unreliable_lags"] = int(np.count_nonzero(af.unreliable))
    return report


def _stationary_cf(series, lapprox, out, tag, report):
    """Empirical CF of the run against the (L) stationary law."""
    s = lapprox.system
    k = np.linspace(-3, 3, 61)
    emp = empirical_cf(series.values - lapprox.anchor, k)
    scale = lapprox.noise_scale / (s.alpha * abs(lapprox.slope)) ** (1.0 / s.alpha)
    ref = stable_cf(k, StableParams(s.alpha, lapprox.beta_star, scale))
    name = f"{tag}_cf.csv"
    np.savetxt(out.path(name), np.column_stack([k, emp.real, emp.imag, ref.real, ref.imag]),
               fmt="%.17g", delimiter=",", header="k,emp_re,emp_im,ref_re,ref_im", comments="")
    out.register(name)
    report["cf_max_error"] = float(np.max(np.abs(emp - ref)))


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    system = build_system(cfg, args.allow_unsupported_alpha)
    out = Outputs(_output_dir(args.out, cfg.output_dir), _watermarked(cfg, args))
    series, run = _run_model(cfg, system, args)
    tag = f"{cfg.system}_{cfg.model}"
    print(f"seed = {run.seed}")
    report = {"command": "simulate", "config": cfg.to_text(), "resolved_run": run.__dict__,
              "system": cfg.system, "model": cfg.model, "n_samples": len(series),
              "provenance": series.provenance}
    write = str(cfg.options.get("write_series", "true")).lower() not in ("false", "0", "no")
    if write:
        name = f"{tag}_series.csv"
        write_series_csv(series, out.path(name))
        out.register(name)
    rr = _density_range(cfg, series)
    _analyse(cfg, series, tag, out, rr, report)
    if "cf_check" in cfg.analyses:
        if cfg.model == "L":
            _stationary_cf(series, l_approx(system), out, tag, report)
        else:
            report["cf_check"] = "skipped: only defined for the (L) model"
    status = EXIT_OK
    if "compare" in cfg.analyses:
        other = cfg.options.get("compare_with", "L" if cfg.model == "full" else "full")
        oseries, orun = _run_model(cfg, system, args, other)
        otag = f"{cfg.system}_{other}"
        rep2 = {}
        _analyse(cfg, oseries, otag, out, rr, rep2)
        comp = _comparison(cfg, series, oseries)
        report["compare"] = {"with": other, "other": rep2, **comp}
        _print_comparison(cfg.model, other, comp)
        status = EXIT_OK if comp["pass"] else EXIT_FAIL
    out.manifest(report)
    print(f"wrote {len(out.files)} artifact(s) to {out.dir}")
    if "modes" in report:
        print(f"density modes: {report['modes']}")
    return status


def _comparison(cfg, s1, s2):
    if abs(s1.sample_Dt - s2.sample_Dt) > 1e-12 * s1.sample_Dt:
        raise UsageError(f"incompatible sampling grids: Dt = {s1.sample_Dt} vs {s2.sample_Dt}")
    stride = int(cfg.options.get("ks_stride", 100))
    ks = ks_distance(s1, s2, stride=stride)
    thr = float(cfg.options.get("ks_threshold", 0.02))
    res = {"ks": ks, "ks_stride": stride, "ks_threshold": thr,
           "modes": [count_modes(s1), count_modes(s2)],
           "tail_mass_gt2": [tail_mass(s1, 2.0), tail_mass(s2, 2.0)],
           "nonpositive": [int(np.count_nonzero(s1.values <= 0)),
                           int(np.count_nonzero(s2.values <= 0))]}
    lag = min(int(round(float(cfg.options.get("max_lag", 4.0)) / s1.sample_Dt)),
              len(s1) // 100, len(s2) // 100)
    ok = ks < thr
    if lag >= 1:
        a1, a2 = autocodifference(s1, lag), autocodifference(s2, lag)
        res["af_sup"] = float(np.max(np.abs(a1.values[1:] - a2.values[1:])))
        res["af_max_lag"] = lag * s1.sample_Dt
        if "af_threshold" in cfg.options:
            ok = ok and res["af_sup"] < float(cfg.options["af_threshold"])
    res["pass"] = bool(ok)
    return res


def _print_comparison(n1, n2, comp):
    print(f"KS({n1}, {n2}) = {comp['ks']:.4f} on every {comp['ks_stride']}th sample "
          f"(threshold {comp['ks_threshold']:g})")
    if "af_sup" in comp:
        print(f"AF sup-distance over lags <= {comp['af_max_lag']:g}: {comp['af_sup']:.4g}")
    print(f"modes: {n1} {comp['modes'][0]}, {n2} {comp['modes'][1]}")
    print(f"samples <= 0: {n1} {comp['nonpositive'][0]}, {n2} {comp['nonpositive'][1]}")
    t1, t2 = comp["tail_mass_gt2"]
    ratio = f" (ratio {t2 / t1:.3g})" if t1 > 0 else ""
    print(f"tail mass |x| > 2: {n1} {t1:.3g}, {n2} {t2:.3g}{ratio}")
    print("PASS" if comp["pass"] else "FAIL")


def cmd_compare(args) -> int:
    if args.series:
        if len(args.series) != 2:
            raise UsageError("--series takes exactly two CSV files")
        try:
            s1, s2 = (read_series_csv(p) for p in args.series)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read series: {exc}") from None
        cfg = ExperimentConfig()
        _apply_compare_options(cfg, args)
        n1, n2 = (Path(p).stem for p in args.series)
        comp = _comparison(cfg, s1, s2)
        out = Outputs(_output_dir(args.out))
        _print_comparison(n1, n2, comp)
        out.manifest({"command": "compare", "series": list(args.series), **comp})
        return EXIT_OK if comp["pass"] else EXIT_FAIL
    cfg = _config_from_args(args)
    _apply_compare_options(cfg, args)
    models = [m.strip() for m in args.models.split(",")]
    if len(models) != 2 or any(m not in MODELS for m in models):
        raise UsageError(f"--models needs two of {MODELS}, e.g. full,L")
    system = build_system(cfg, args.allow_unsupported_alpha)
    out = Outputs(_output_dir(args.out, cfg.output_dir), _watermarked(cfg, args))
    print(f"seed = {cfg.run.get('seed', 0)}")
    runs = []
    for i, m in enumerate(models):
        c = replace(cfg, run=dict(cfg.run))
        c.run["seed"] = int(cfg.run.get("seed", 0)) + i
        runs.append(_run_model(c, system, args, m))
    (s1, r1), (s2, r2) = runs
    rr = _density_range(cfg, s1, s2)
    reps = []
    for m, s in zip(models, (s1, s2)):
        rep = {}
        _analyse(replace(cfg, analyses=("density",)), s, f"{cfg.system}_{m}", out, rr, rep)
        reps.append(rep)
    comp = _comparison(cfg, s1, s2)
    _print_comparison(models[0], models[1], comp)
    out.manifest({"command": "compare", "config": cfg.to_text(), "models": models,
                  "resolved_runs": [r1.__dict__, r2.__dict__], **comp})
    return EXIT_OK if comp["pass"] else EXIT_FAIL


def _apply_compare_options(cfg, args):
    for k in ("ks_threshold", "af_threshold", "ks_stride", "max_lag"):
        v = getattr(args, k, None)
        if v is not None:
            cfg.options[k] = v


def cmd_cf_check(args) -> int:
    check_alpha(args.alpha, allow_below_one=False)
    gamma = 1.0 - 1.0 / args.alpha if args.gamma is None else args.gamma
    eps_list = [float(e) for e in args.eps.split(",")]
    rows, errs = [], []
    for eps in eps_list:
        try:
            ctx = CfContext(args.l, args.m, args.f2, args.g2, args.g1, eps, gamma, args.b,
                            args.alpha, args.beta)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        t = args.t if args.regime == "t_order_one" else args.t * eps
        q = cf_integral_quadrature(t, args.kernel, ctx)
        a = cf_integral_asymptotic(t, args.regime, args.kernel, ctx, remainder=args.remainder)
        err = abs(a - q)
        rel = err / abs(q) if q != 0 else float("inf")
        rows.append((eps, a.real, a.imag, q.real, q.imag, err, rel))
        errs.append(rel)
    out = Outputs(_output_dir(args.out))
    name = f"cf_check_{args.kernel}_{args.regime}.csv"
    np.savetxt(out.path(name), np.array(rows), fmt="%.17g", delimiter=",",
               header="epsilon,asym_re,asym_im,quad_re,quad_im,abs_err,rel_err", comments="")
    out.register(name)
    for r in rows:
        print(f"eps = {r[0]:.1e}: |asym - quad| = {r[5]:.3e} (relative {r[6]:.3e})")
    report = {"command": "cf-check", "alpha": args.alpha, "gamma": gamma, "kernel": args.kernel,
              "regime": args.regime, "epsilon": eps_list, "relative_errors": errs}
    abs_errs = [r[5] for r in rows]
    if max(abs_errs) < args.exact_tol:
        ok = True
        print(f"all errors below {args.exact_tol:g}: exact")
    else:
        slope = convergence_slope(eps_list, errs)
        target = 1.0 - gamma if args.regime == "t_order_one" else None
        report["slope"] = slope
        print(f"observed order (slope of relative error) = {slope:.4f}")
        if target is not None and not args.remainder:
            ok = abs(slope - target) <= args.tolerance
            print(f"expected {target:.4f} +- {args.tolerance:g}")
        else:
            ok = True
    report["pass"] = ok
    out.manifest(report)
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_plan(args) -> int:
    plan = plan_sample_size(args.pi, args.omega, args.bins, args.dt, args.decorrelation)
    print(f"M_Z = {plan.M_Z:.4f}")
    print(f"N_Z = {plan.N_Z:.4g} independent samples")
    print(f"N   = {plan.N:.4g} samples at Dt = {args.dt:g}")
    if args.system:
        cfg = ExperimentConfig(system=args.system, model=args.model).validate()
        system = build_system(cfg)
        probe_n = 20_000
        c = replace(cfg, run={"n_samples": probe_n, "burn_in": 0.0, "n_chunks": 1,
                              "sample_Dt": args.dt})
        model = build_model(c, system)
        run = resolve_run(c, system)
        t0 = time.perf_counter()
        simulate(model, run)
        rate = probe_n / (time.perf_counter() - t0)
        secs = plan.N / rate
        print(f"measured {rate:.4g} samples/s ({rate * run.stride:.4g} steps/s) for "
              f"{args.system} {args.model}; estimated wall-clock {_hms(secs)}")
    return EXIT_OK


def _hms(secs):
    h, rem = divmod(int(round(secs)), 3600)
    m, s = divmod(rem, 60)
    return f"{h}h{m:02d}m{s:02d}s"


# ------------------------------------------------------------------ parser

def _add_system_args(p):
    p.add_argument("--config", help="experiment config file ([system]/[run]/[analyses])")
    p.add_argument("--system", choices=SYSTEMS)
    for k in SYSTEM_KEYS:
        p.add_argument(f"--{k}", type=float, default=None)
    for k in FUNCTION_KEYS:
        p.add_argument(f"--{k}", default=None, help=f"custom system: {k}(x) expression")
    p.add_argument("--delta-t", dest="delta_t", type=float)
    p.add_argument("--sample-dt", dest="sample_Dt", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--marcus-substeps", dest="marcus_substeps_M", type=int)
    p.add_argument("--chunks", dest="n_chunks", type=int)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--paper-scale", action="store_true",
                   help=f"default to {LARGE_SAMPLES:.0e} samples instead of {DESK_SAMPLES:.0e}")
    p.add_argument("--allow-unsupported-alpha", action="store_true",
                   help="permit alpha < 1 (outputs are watermarked)")
    p.add_argument("--out", help="output directory (default $LEVYAVG_OUTPUT_DIR)")


def _int_arg(text):
    return int(float(text))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levyavg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"levyavg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("noise-validate", help="check the stable generator against its CF")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--n", type=_int_arg, default=10 ** 6)
    p.add_argument("--dt", type=float, default=0.01, help="step for the alpha = 2 variance check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=0.005)
    p.add_argument("--kmax", type=float, default=5.0)
    p.add_argument("--points", type=int, default=41)
    p.add_argument("--allow-unsupported-alpha", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_noise_validate)

    p = sub.add_parser("simulate", help="run one model and write series/density/AF CSVs")
    _add_system_args(p)
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--analyses", help=f"comma list from {ANALYSES}")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="compare two models (or two series CSVs)")
    _add_system_args(p)
    p.add_argument("--models", default="full,L", help="two models, e.g. full,nplus")
    p.add_argument("--series", nargs="+", help="compare two existing series CSVs instead")
    p.add_argument("--ks-threshold", type=float)
    p.add_argument("--af-threshold", type=float)
    p.add_argument("--ks-stride", type=int)
    p.add_argument("--max-lag", type=float)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cf-check", help="asymptotic CF integral vs quadrature over an eps sweep")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--l", type=float, default=1.0)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--f2", type=float, default=1.0)
    p.add_argument("--g2", type=float, default=-1.0)
    p.add_argument("--g1", type=float, default=0.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0, help="time (in units of eps for t_order_eps)")
    p.add_argument("--kernel", choices=("lambda", "gamma"), default="lambda")
    p.add_argument("--regime", choices=("t_order_one", "t_order_eps"), default="t_order_one")
    p.add_argument("--eps", default="1e-1,1e-2,1e-3,1e-4")
    p.add_argument("--remainder", action="store_true", help="include the first correction")
    p.add_argument("--tolerance", type=float, default=0.15)
    p.add_argument("--exact-tol", type=float, default=1e-10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cf_check)

    p = sub.add_parser("plan", help="sample sizes for tail-accurate density estimates")
    p.add_argument("--pi", type=float, default=1e-5, help="smallest bin mass to resolve")
    p.add_argument("--omega", type=float, default=1e-5, help="confidence half-width")
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--dt", type=float, default=0.01, help="sampling step")
    p.add_argument("--decorrelation", type=float, default=1.0, help="decorrelation time")
    p.add_argument("--system", choices=SYSTEMS[:-1],
                   help="measure simulation speed for this system")
    p.add_argument("--model", choices=MODELS, default="full")
    p.set_defaults(func=cmd_plan)
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            code = args.func(args)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        return code
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationAborted, QuadratureError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
