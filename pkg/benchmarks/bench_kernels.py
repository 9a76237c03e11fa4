"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 1000 10000 100000] [--repeat 20]

Kernel timings import both backends directly. The end-to-end row runs one
solve per backend in a subprocess so ``LSLAB_BACKEND`` takes effect.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from lslab import _kernels_numba, _kernels_numpy
from lslab.geometry import chain, make_line
from lslab.grid import build_grid

SOLVE = """
import time
from lslab.geometry import chain, make_line
from lslab.solver import SolverOptions, minimize_log_sobolev
D = chain([make_line(-10.0, 10.0)])
minimize_log_sobolev(D, SolverOptions(dx=0.1, restarts=1))
t = time.perf_counter()
minimize_log_sobolev(D, SolverOptions(dx=1e-3))
print(time.perf_counter() - t)
"""


def kernel_args(n, rng):
    grid = build_grid(chain([make_line(0.0, 1.0)]), 1.0 / n)
    v = rng.random(grid.size)
    return v, (v, grid.cl, grid.cr, grid.clen, grid.cw, grid.q, grid.qR), grid


def best_of(func, repeat):
    return min(timeit.repeat(func, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--skip-solve", action="store_true")
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    print(f"{'kernel':<16}{'n':>9}{'numpy ms':>12}{'numba ms':>12}{'speedup':>9}")
    for n in args.sizes:
        v, kargs, grid = kernel_args(n, rng)
        lower = -np.ones(grid.size)
        upper = -np.ones(grid.size)
        diag = np.full(grid.size, 4.0)
        cases = {
            "energy_parts": lambda m: m.energy_parts(*kargs),
            "euclid_gradient": lambda m: m.euclid_gradient(*kargs),
            "thomas": lambda m: m.thomas(lower, diag, upper, v),
        }
        for name, call in cases.items():
            call(_kernels_numba)  # compile outside the timer
            a = np.asarray(call(_kernels_numpy), dtype=float)
            b = np.asarray(call(_kernels_numba), dtype=float)
            assert np.allclose(a, b, rtol=1e-10, atol=1e-12), name
            t_np = best_of(lambda: call(_kernels_numpy), args.repeat)
            t_nb = best_of(lambda: call(_kernels_numba), args.repeat)
            print(f"{name:<16}{n:>9}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>9.1f}")

    if args.skip_solve:
        return
    print()
    times = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, LSLAB_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", SOLVE], env=env, capture_output=True, text=True, check=True)
        times[backend] = float(out.stdout.strip())
    print(f"line solve, dx = 1e-3: numpy {times['numpy']:.2f} s, numba {times['numba']:.2f} s, "
          f"speedup {times['numpy'] / times['numba']:.1f}")


if __name__ == "__main__":
    main()
