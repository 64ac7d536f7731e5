"""Time the compiled and pure-Python kernel backends on the same workloads.

    python benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0]

Both backends produce the same samples (up to last-bit differences in
transcendental functions), so only wall-clock time is compared.
"""

import argparse
import time

import numpy as np

from levyavg import _backend
from levyavg.integrators import SimConfig, simulate
from levyavg.reduction import l_approx, n_plus_approx
from levyavg.sde_models import (linear_system, nonlinear_system_1, nonlinear_system_2,
                                nonlinear_system_3)


def _cms(n):
    rng = np.random.default_rng(0)
    r, w = rng.random(n), rng.standard_exponential(n)
    out = np.empty(n)
    return lambda: _backend.kernels.cms_unit(r, w, 1.7, 0.0, out)


def _sim(model, cfg):
    return lambda: simulate(model, cfg)


def workloads(scale):
    n = max(1000, int(200_000 * scale))
    return [
        ("stable variates (CMS)", f"{5 * n:,} draws", _cms(5 * n)),
        ("linear full, euler", f"{n // 10:,} samples x 10 steps",
         _sim(linear_system(alpha=1.7), SimConfig(1e-3, 1e-2, n // 10, burn_in=0, n_chunks=4))),
        ("nonlinear1 full, pc", f"{n // 50:,} samples x 50 steps",
         _sim(nonlinear_system_1(), SimConfig(2e-4, 1e-2, n // 50, burn_in=0, n_chunks=4,
                                              scheme="predictor_corrector"))),
        ("linear (L), euler", f"{n:,} steps",
         _sim(l_approx(linear_system(alpha=1.9)), SimConfig(1e-2, 1e-2, n, burn_in=0,
                                                            n_chunks=4))),
        ("nonlinear1 (N+), marcus_closed", f"{n:,} steps",
         _sim(n_plus_approx(nonlinear_system_1()),
              SimConfig(1e-2, 1e-2, n, burn_in=0, n_chunks=4, scheme="marcus_closed"))),
        ("nonlinear2 (N+), marcus_numeric", f"{n:,} steps",
         _sim(n_plus_approx(nonlinear_system_2()),
              SimConfig(1e-2, 1e-2, n, burn_in=0, n_chunks=4, scheme="marcus_numeric"))),
        ("nonlinear3 (N+), pc", f"{n:,} steps",
         _sim(n_plus_approx(nonlinear_system_3()),
              SimConfig(1e-2, 1e-2, n, burn_in=0, n_chunks=4, scheme="predictor_corrector"))),
    ]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply workload sizes")
    args = ap.parse_args()
    try:
        _backend.use("cython")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")
    print(f"{'workload':34s} {'size':>26s} {'cython s':>10s} {'python s':>10s} {'speed-up':>9s}")
    for name, size, fn in workloads(args.scale):
        res = {}
        for b in ("cython", "python"):
            _backend.use(b)
            fn()  # warm-up
            res[b] = best_of(fn, args.repeat)
        print(f"{name:34s} {size:>26s} {res['cython']:10.3f} {res['python']:10.3f} "
              f"{res['python'] / res['cython']:8.1f}x")
    _backend.use("cython")


if __name__ == "__main__":
    main()
