"""Compare the compiled and numpy pairwise kernels.

    python3 benchmarks/bench_kernels.py [--sizes 100,400,1600] [--repeat 5]
"""

import argparse
import time

import numpy as np

from consensus_lab._backend import load


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="100,400,1600")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    fast, fast_name = load("cython")
    slow, _ = load("python")
    if fast_name != "cython":
        print("compiled kernels are not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'n':>6}{'cython ms':>12}{'numpy ms':>12}{'speedup':>10}{'max diff':>12}")
    for n in (int(s) for s in args.sizes.split(",")):
        x = rng.uniform(-1, 1, n)
        W = rng.uniform(0, 1, (n, n))
        W = np.ascontiguousarray(0.5 * (W + W.T))
        cases = [
            ("alignment rational", lambda k: k.alignment_rhs(x, 1, 1.0)),
            ("alignment indicator", lambda k: k.alignment_rhs(x, 2, 0.5)),
            ("weighted constant", lambda k: k.weighted_alignment_rhs(x, W, 0, 1.0)),
        ]
        for name, call in cases:
            tf = best_of(lambda: call(fast), args.repeat)
            ts = best_of(lambda: call(slow), args.repeat)
            diff = float(np.max(np.abs(call(fast) - call(slow))))
            print(f"{name:<24}{n:>6}{tf * 1e3:>12.3f}{ts * 1e3:>12.3f}{ts / tf:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
