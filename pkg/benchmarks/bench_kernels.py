"""Compare the numba kernels against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats 5]

Both backends are imported directly, so the BAYESPL_BACKEND variable is
irrelevant here. The numba timings exclude compilation (one warm call
per kernel before the clock starts).
"""
import argparse
import time

import numpy as np

from bayespl.kernels import _numpy

try:
    from bayespl.kernels import _numba
except ImportError:
    _numba = None


def _bench(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)

    passes = rng.gamma(1.0, 1.0, size=(9, 200_000, 8))
    passes /= passes.sum(axis=2, keepdims=True)
    passes = np.ascontiguousarray(passes)

    p = np.ascontiguousarray(rng.random(2_000_000))

    masks_a = np.ascontiguousarray(rng.random((64, 100_000)) < 0.2)
    masks_b = np.ascontiguousarray(rng.random((64, 100_000)) < 0.2)

    cost = np.ascontiguousarray(rng.uniform(-1, 1, size=(256, 256)))

    cases = [
        ("aggregate_passes (9x200k x8)", "aggregate_passes", (passes, 9)),
        ("binary_entropy (2M)", "binary_entropy", (p,)),
        ("pairwise_iou (64x64 @100k)", "pairwise_iou", (masks_a, masks_b)),
        ("lsa_solve (256x256)", "lsa_solve", (cost,)),
    ]

    print(f"{'kernel':<32} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for label, name, call_args in cases:
        t_np = _bench(getattr(_numpy, name), call_args, args.repeats)
        if _numba is None:
            print(f"{label:<32} {t_np * 1e3:>8.1f}ms {'n/a':>10} {'n/a':>8}")
            continue
        numba_fn = getattr(_numba, name)
        numba_fn(*call_args)  # compile outside the clock
        t_nb = _bench(numba_fn, call_args, args.repeats)
        print(f"{label:<32} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
