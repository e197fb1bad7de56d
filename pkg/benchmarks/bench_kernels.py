"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--n 1200]
"""
import argparse
import timeit

import numpy as np

from lerconf import kernels
from lerconf.estimation import _cosine_lrs


def training_case(shape, n, loss, seed=0):
    rng = np.random.default_rng(seed)
    d = shape[0]
    theta = rng.normal(0, 0.3, kernels.impl.n_params(shape))
    X = rng.standard_normal((n, d))
    r = X[:, 0].copy() if loss == kernels.LOSS_PINBALL else np.zeros(n)
    y = rng.standard_normal(n)
    order = rng.permutation(n).astype(np.int64)
    lrs = _cosine_lrs(1e-3, -(-n // 18))

    def run(k):
        th = theta.copy()
        m = np.zeros_like(th)
        v = np.zeros_like(th)
        k.train_epoch(th, m, v, 0, shape, X, r, y, order, 18, lrs, loss, 0.05, 0.95, 1e-8)

    return run


def detection_case(seed=0):
    rng = np.random.default_rng(seed)
    cols = np.arange(64)
    row = 0.2 + 0.6 * ((cols > 18) & (cols < 46))
    sm = row + 0.05 * rng.standard_normal((1024, 64))

    def run(k):
        k.detect_rows(sm, 2, 32, 32, 61)

    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=1200, help="training rows per epoch")
    args = ap.parse_args(argv)

    backends = {"python": kernels.get_backend("python")}
    if kernels.compiled_available():
        backends["cython"] = kernels.get_backend("cython")
    else:
        print("compiled kernels not built; timing the numpy backend only")

    cases = {
        "difficulty epoch (11-16-1, MAE)": training_case((11, 16, 1), args.n, kernels.LOSS_MAE),
        "quantile epoch (3-6-2, pinball)": training_case((3, 6, 2), args.n, kernels.LOSS_PINBALL),
        "row detection (1024x64)": detection_case(),
    }
    print(f"{'kernel':<34}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases.items():
        times = {}
        for b, k in backends.items():
            fn(k)  # warm up
            times[b] = min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat))
        speed = f"{times['python'] / times['cython']:>9.1f}x" if "cython" in times else f"{'-':>10}"
        print(f"{name:<34}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values()) + speed)


if __name__ == "__main__":
    main()
