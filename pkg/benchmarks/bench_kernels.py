"""Time the numba kernels against the numpy/scipy fallbacks.

Usage::

    python benchmarks/bench_kernels.py [--n 4000] [--knots 22] [--repeat 5]

Kernel timings call both implementations directly in one process. The
end-to-end timing runs a small sweep twice in subprocesses, once with
``PSDERIV_NO_NUMBA=1``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from psderiv import _kernels
from psderiv import design_matrix, make_knots, penalty_for_knots
from psderiv.selection import LambdaGrid

SETUP = "from psderiv import ExperimentConfig, run_sweep"
SWEEP = "run_sweep(ExperimentConfig(ns=(250, 1000, 4000), reps=20, seed=1), ('gcv', 'reml'))"


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(n, K, q=4, m=2):
    kn = make_knots(K, q)
    t = kn.for_order(q)
    xs = np.linspace(0.0, 1.0, n)
    basis = design_matrix(kn, q, xs)
    gram = _kernels.banded_gram(basis.first, basis.compact, kn.dim(q)) / n
    pen = penalty_for_knots(kn, m).banded
    rhs = basis.values.T @ np.sin(6 * xs) / n
    lams = LambdaGrid.log_spaced().values
    args = (gram, pen, rhs, lams, 1e-12)
    return {
        "basis_rows": (
            lambda: _kernels._basis_rows_numba(t, q, xs),
            lambda: _kernels._basis_rows_numpy(t, q, xs),
        ),
        "banded_gram": (
            lambda: _kernels._banded_gram_numba(basis.first, basis.compact, kn.dim(q)),
            lambda: _kernels._banded_gram_numpy(basis.first, basis.compact, kn.dim(q)),
        ),
        "grid_solve(85 lambdas)": (
            lambda: _kernels._grid_solve_numba(*args),
            lambda: _kernels._grid_solve_numpy(*args),
        ),
    }


def end_to_end(no_numba):
    env = dict(os.environ, PSDERIV_NO_NUMBA="1" if no_numba else "0")
    # imports and JIT cache loading stay outside the timed region
    warm = "run_sweep(ExperimentConfig(ns=(250, 300, 350), reps=1), ('gcv',))"
    stmt = (f"import time; {SETUP}; {warm}; t = time.perf_counter(); {SWEEP}; "
            "print(time.perf_counter() - t)")
    subprocess.run([sys.executable, "-c", f"{SETUP}; {SWEEP}"], env=env, check=True)
    out = subprocess.run([sys.executable, "-c", stmt], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip())


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=4000)
    parser.add_argument("--knots", type=int, default=22)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-sweep", action="store_true")
    args = parser.parse_args(argv)

    if not _kernels.HAVE_NUMBA:
        sys.exit("numba path disabled (PSDERIV_NO_NUMBA set or numba missing)")
    print(f"n={args.n} K={args.knots} q=4 m=2, best of {args.repeat}")
    print(f"{'kernel':<24}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, (fast, slow) in kernel_cases(args.n, args.knots).items():
        a = best_of(fast, args.repeat) * 1e3
        b = best_of(slow, args.repeat) * 1e3
        print(f"{name:<24}{a:>12.3f}{b:>12.3f}{b / a:>9.1f}x")
    if not args.skip_sweep:
        a = end_to_end(False)
        b = end_to_end(True)
        print(f"{'sweep (3 n x 20 reps)':<24}{a * 1e3:>12.0f}{b * 1e3:>12.0f}{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
