#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times the three hot paths on training/retrieval-shaped workloads: token
hashing, embedding-bag forward/backward, and top-k selection.

    python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import string
import time

import numpy as np

from coherank._kernels import _pykernels

try:
    from coherank._kernels import _cykernels
except ImportError:
    _cykernels = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    letters = np.array(list(string.ascii_lowercase))

    # workload shaped like one epoch of encoding at desk scale
    tokens = ["".join(rng.choice(letters, size=8)).encode() for _ in range(200_000)]
    weights = rng.uniform(-0.125, 0.125, size=(1024, 64))
    lengths = rng.integers(4, 40, size=20_000)
    offsets = np.zeros(len(lengths) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    indices = rng.integers(0, 1024, size=int(offsets[-1])).astype(np.int64)
    grad = rng.normal(size=(len(lengths), 64))
    scores = rng.normal(size=200_000)

    cases = {
        f"hash_buckets ({len(tokens) // 1000}k tokens)":
            lambda impl: impl.hash_buckets(tokens, 1024),
        f"bag_mean_forward ({len(lengths) // 1000}k bags)":
            lambda impl: impl.bag_mean_forward(weights, indices, offsets),
        f"bag_mean_backward ({len(lengths) // 1000}k bags)":
            lambda impl: impl.bag_mean_backward(grad, indices, offsets, 1024),
        "topk_indices (200k scores, k=50)":
            lambda impl: impl.topk_indices(scores, 50),
    }

    print(f"{'kernel':<38} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for name, call in cases.items():
        t_py = timeit(lambda: call(_pykernels), args.repeats)
        if _cykernels is None:
            print(f"{name:<38} {t_py * 1e3:>8.2f}ms {'n/a':>10} {'':>8}")
            continue
        t_cy = timeit(lambda: call(_cykernels), args.repeats)
        print(f"{name:<38} {t_py * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms "
              f"{t_py / t_cy:>7.1f}x")
    if _cykernels is None:
        print("\ncompiled extension not importable; build it with "
              "`pip install -e . --no-build-isolation`")


if __name__ == "__main__":
    main()
