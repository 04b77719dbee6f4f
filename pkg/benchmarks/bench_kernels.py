"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from paircon import _kernels
from paircon._kernels import _fallback


def cases(rng):
    src = rng.random((48, 48)).astype(np.float32)
    batch = rng.random((32, 48 * 48)).astype(np.float32)
    return {
        "augment (crop+flip+jitter, 48x48)": lambda m: m.augment(src, 3, 5, 40, 38, True, 1.2, 0.8),
        "crop_resize (96x96 -> 48x48)": lambda m, big=rng.random((96, 96)).astype(np.float32): m.crop_resize(big, 0, 0, 96, 96, 48, 48),
        "centered_cosine_mean (32 x 2304)": lambda m: m.centered_cosine_mean(batch),
        "mw_counts (20, 20)": lambda m: m.mw_counts(20, 20),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    compiled = _kernels.compiled_module()
    if compiled is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'compiled us':>12s} {'numpy us':>12s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        t_c = min(timeit.repeat(lambda: fn(compiled), number=args.repeat, repeat=3)) / args.repeat
        t_p = min(timeit.repeat(lambda: fn(_fallback), number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:40s} {t_c * 1e6:12.1f} {t_p * 1e6:12.1f} {t_p / t_c:8.1f}x")


if __name__ == "__main__":
    main()
