"""Compare the numba and pure-numpy k-NN kernels.

    python benchmarks/bench_knn.py [--repeats 20]

Both paths are called directly, so the ``MOSS_DISABLE_NUMBA`` flag does not
matter here. Outputs are checked for bitwise equality before timing.
"""

import argparse
import time

import numpy as np

from moss import kernels

SHAPES = [(64, 16), (256, 64), (512, 64), (1048, 64)]


def timeit(fn, *args, repeats=20):
    fn(*args)  # warm-up / compile
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--k", type=int, default=12)
    args = parser.parse_args()

    print(f"numba available: {kernels.NUMBA_AVAILABLE}   active backend: {kernels.backend()}")
    print(f"{'N':>6}{'d':>5}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    rng = np.random.default_rng(0)
    for n, d in SHAPES:
        x = rng.standard_normal((n, d))
        ref = kernels.knn_mean_radii_numpy(x, args.k)
        t_np = timeit(kernels.knn_mean_radii_numpy, x, args.k, repeats=args.repeats)
        if not kernels.NUMBA_AVAILABLE:
            print(f"{n:>6}{d:>5}{t_np * 1e3:>12.2f}{'-':>12}{'-':>10}")
            continue
        out = kernels.knn_mean_radii_numba(x, args.k)
        if not np.array_equal(ref, out):
            raise SystemExit(f"backends disagree at N={n}, d={d}")
        t_nb = timeit(kernels.knn_mean_radii_numba, x, args.k, repeats=args.repeats)
        print(f"{n:>6}{d:>5}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
