#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Prints one line per kernel and size, plus whether the two paths agreed
bit for bit. Compile time is excluded by a warm-up call.

    python benchmarks/bench_kernels.py [--repeats 5] [--json out.json]
"""

import argparse
import json
import time

import numpy as np

from recogsheet import kernels


def best_of(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def chol_cases(rng):
    for d, rows in ((64, 100), (256, 100)):
        A = rng.normal(size=(d + 8, d))
        R0 = np.linalg.cholesky(A.T @ A + np.eye(d)).T.copy()
        X = rng.normal(size=(rows, d))

        def run(impl, R0=R0, X=X):
            R = R0.copy()
            impl(R, X)
            return R

        yield f"chol_update_rows d={d} rows={rows}", run, kernels.chol_update_rows_numba, kernels.chol_update_rows_numpy


def vote_cases(rng):
    for n, T, w in ((6_160, 28, 11), (6_160, 28, 50), (50_000, 10, 21)):
        labels = rng.integers(0, T, n)
        scores = rng.normal(size=(n, T))
        starts = (np.arange(n) // 220) * 220

        def run(impl, labels=labels, scores=scores, starts=starts, w=w):
            return impl(labels, scores, starts, w, kernels.TIE_SUMMED_SCORE)

        yield f"window_vote n={n} T={T} w={w}", run, kernels.window_vote_numba, kernels.window_vote_numpy


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--json", help="also write results here")
    args = parser.parse_args()

    if kernels.window_vote_numba is None:
        raise SystemExit("numba is disabled or missing; nothing to compare")

    rng = np.random.default_rng(0)
    results = []
    for name, run, fast, slow in [*chol_cases(rng), *vote_cases(rng)]:
        same = np.array_equal(run(fast), run(slow))
        t_fast = best_of(lambda: run(fast), args.repeats)
        t_slow = best_of(lambda: run(slow), args.repeats)
        results.append(dict(kernel=name, numba_s=t_fast, numpy_s=t_slow, speedup=t_slow / t_fast, identical=same))
        print(f"{name:<36} numba {t_fast * 1e3:9.3f} ms  numpy {t_slow * 1e3:9.3f} ms  "
              f"x{t_slow / t_fast:6.1f}  identical={same}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
