"""Time the numba kernels against their pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--repeats N]

Both implementations are imported directly, so one process measures both
regardless of the ADLENS_NO_NUMBA flag. Numba timings exclude compilation
(one warm-up call first).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from adlens import kernels


def timeit(fn, *args, repeats=5):
    fn(*args)  # warm-up (and numba compile)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = []

    xp = rng.standard_normal((32, 32, 34, 34)).astype(np.float32)
    rows.append(("im2col 32x32x32 k3",
                 timeit(kernels.im2col_numpy, xp, 3, 3, 1, repeats=args.repeats),
                 timeit(kernels.im2col_numba, xp, 3, 3, 1, repeats=args.repeats) if kernels.NUMBA_AVAILABLE else None))

    cols = rng.standard_normal((32, 288, 1024)).astype(np.float32)
    shape = (32, 32, 34, 34)
    rows.append(("col2im 32x32x32 k3",
                 timeit(kernels.col2im_numpy, cols, shape, 3, 3, 1, repeats=args.repeats),
                 timeit(lambda c: kernels.col2im_numba(c, *shape, 3, 3, 1), cols, repeats=args.repeats) if kernels.NUMBA_AVAILABLE else None))

    pts = rng.standard_normal((5000, 32))
    centers = rng.standard_normal((8, 32))
    rows.append(("kmeans assign 5000x32 k8",
                 timeit(kernels.kmeans_assign_numpy, pts, centers, repeats=args.repeats),
                 timeit(kernels.kmeans_assign_numba, pts, centers, repeats=args.repeats) if kernels.NUMBA_AVAILABLE else None))

    field = rng.standard_normal((256, 256))
    rows.append(("window sums 256x256 p32",
                 timeit(kernels.window_sums_numpy, field, 32, repeats=args.repeats),
                 timeit(kernels.window_sums_numba, field, 32, repeats=args.repeats) if kernels.NUMBA_AVAILABLE else None))

    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<28} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, t_np, t_nb in rows:
        if t_nb is None:
            print(f"{name:<28} {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>8}")
        else:
            print(f"{name:<28} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms {t_np / t_nb:>7.2f}x")


if __name__ == "__main__":
    main()
