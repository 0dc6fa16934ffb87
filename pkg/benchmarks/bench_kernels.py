"""Time the compiled kernels against their NumPy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from ridklab import _pykernels

try:
    from ridklab import _ckernels
except ImportError:
    _ckernels = None


def cases():
    rng = np.random.default_rng(0)
    q1 = rng.uniform(0, 2 * np.pi, 10_000)
    w1 = np.vstack([np.ones(10_000), rng.standard_normal(10_000)])
    q2 = np.ascontiguousarray(rng.uniform(0, 2 * np.pi, (500, 2)))
    w2 = np.vstack([np.ones(500), rng.standard_normal((2, 500))])
    return [
        ("char_sums_1d N=1e4 kmax=512", lambda k: k.char_sums_1d(q1, w1, 512)),
        ("char_sums_2d N=500 M=64", lambda k: k.char_sums_2d(q2, w2, 64)),
        ("bessel_ratio_table jmax=2000 x=5e3", lambda k: k.bessel_ratio_table(2000, 5e3)),
    ]


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the NumPy kernels are available")
    print(f"{'kernel':38s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speed-up':>9s}")
    for name, call in cases():
        slow = best_time(lambda: call(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:38s} {slow * 1e3:11.2f} {'-':>12s} {'-':>9s}")
            continue
        fast = best_time(lambda: call(_ckernels), args.repeat)
        print(f"{name:38s} {slow * 1e3:11.2f} {fast * 1e3:12.2f} {slow / fast:8.1f}x")


if __name__ == "__main__":
    main()
