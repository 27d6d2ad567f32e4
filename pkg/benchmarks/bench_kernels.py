"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel: median seconds for each backend and the speedup.
"""

import argparse
import timeit

import numpy as np

from survcal import _pure

try:
    from survcal import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    n = 2000
    t = np.round(rng.exponential(30, n), 1)
    e = rng.random(n) < 0.7
    grid = np.array([5.0, 10.0, 30.0, 50.0, 70.0])
    X = rng.standard_normal((1000, 5))
    y = rng.standard_normal(1000)
    feats = np.arange(5)
    p = rng.random(800)
    t2 = rng.exponential(size=800)
    e2 = rng.random(800) < 0.7
    return {
        "jackknife_loo sp (N=2000, 5 horizons)": lambda k: k.jackknife_loo(t, e, grid, False),
        "jackknife_loo rm (N=2000, 5 horizons)": lambda k: k.jackknife_loo(t, e, grid, True),
        "best_split (N=1000, d=5)": lambda k: k.best_split(X, y, feats, 5),
        "concordance_counts (N=800)": lambda k: k.concordance_counts(p, t2, e2, False),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':42s} {'python':>10s} {'cython':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        py = np.median(timeit.repeat(lambda: fn(_pure), number=1, repeat=args.repeat))
        if _kernels is None:
            print(f"{name:42s} {py:10.4f} {'-':>10s} {'-':>8s}")
            continue
        cy = np.median(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat))
        print(f"{name:42s} {py:10.4f} {cy:10.4f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
