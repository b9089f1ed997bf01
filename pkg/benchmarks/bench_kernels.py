"""Compare the Schur complement kernels on Gram-style blocks and one full solve.

Run: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from wassos import backend
from wassos.apps import get_preset
from wassos.backend.kernels import KERNELS
from wassos.hierarchy import build


def hankel_block(n):
    """Coefficient-matching rows of a univariate Gram block: row p holds all (a, b) with a + b = p."""
    ptr, ea, eb = [0], [], []
    for p in range(2 * n - 1):
        for a in range(max(0, p - n + 1), p // 2 + 1):
            ea.append(a)
            eb.append(p - a)
        ptr.append(len(ea))
    ev = np.where(np.array(ea) == np.array(eb), 1.0, 0.5)
    return (np.array(ptr, np.int64), np.array(ea, np.int64), np.array(eb, np.int64), ev)


def spd(n, rng):
    A = rng.standard_normal((n, n))
    return np.ascontiguousarray(A @ A.T + n * np.eye(n))


def timeit(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    names = sorted(KERNELS)
    print("block-level timings (best of %d, ms)" % args.repeat)
    print("%6s " % "n" + " ".join("%12s" % k for k in names) + "   max|diff|")
    for n in (4, 6, 10, 15, 20, 30):
        data = hankel_block(n)
        X, Z = spd(n, rng), np.linalg.inv(spd(n, rng))
        ref = KERNELS["numpy"](*data, X, Z)
        cells, diff = [], 0.0
        for k in names:
            out = KERNELS[k](*data, X, Z)
            diff = max(diff, float(np.abs(out - ref).max()))
            cells.append(1e3 * timeit(lambda: KERNELS[k](*data, X, Z), args.repeat))
        print("%6d " % n + " ".join("%12.3f" % c for c in cells) + "   %.1e" % diff)

    model = get_preset("paper-revenue").generate(0, eps=1.0)
    form = backend.compile(build("ad", model, 2))
    print("\nfull solve, revenue preset r=2 eps=1 (s)")
    for k in names:
        if k == "numpy-kron":
            continue
        t = time.perf_counter()
        res = backend.solve(form, kernel=k)
        print("%12s %8.2f  %s %.8f" % (k, time.perf_counter() - t, res.status, res.objective))


if __name__ == "__main__":
    main()
