"""Time the compiled kernels against the pure-Python loops on identical inputs.

    python3 bench/bench_kernels.py [--rows 2000] [--cols 64] [--repeat 3]

Each kernel is checked for identical output before its timing is reported.
"""

import argparse
import time

import numpy as np

from relay_sim import kernels
from relay_sim.blockage import sample_trajectories
from relay_sim.heights import Exponential


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def _cases(rows, cols, rng):
    X = np.ascontiguousarray(np.cumsum(rng.exponential(1.0, (rows, cols)), axis=1))
    H = np.ascontiguousarray(rng.exponential(1.0, (rows, cols)))
    z = np.zeros(rows)
    x1 = np.ascontiguousarray(np.cumsum(rng.exponential(1.0, rows * 10)))
    h1 = np.ascontiguousarray(rng.exponential(1.0, rows * 10))
    up = np.ascontiguousarray(np.sqrt(np.maximum(4 - X**2, 0)))

    def chain(mod):
        idx = np.full((rows, 8), -1, dtype=np.int64)
        cnt = np.zeros(rows, dtype=np.int64)
        mod.batch_chain_argmax(X, H, np.zeros(rows, dtype=np.int64), z, z, 8, np.inf, idx, cnt)
        return idx, cnt

    def hull(mod):
        out = np.empty(x1.size, dtype=np.int64)
        mod.hull_parents(x1, h1, out)
        return (out,)

    def rchain(mod):
        idx = np.full((rows, 8), -1, dtype=np.int64)
        cnt = np.zeros(rows, dtype=np.int64)
        st = np.zeros(rows, dtype=np.int64)
        mod.batch_range_chain(X, H, z, z, 2.0, 8, idx, cnt, st)
        return idx, cnt, st

    def general(mod):
        gi, gs, gst = (np.zeros(rows, dtype=np.int64) for _ in range(3))
        mod.batch_general_first(X, H, up, -up, z, z, np.full(rows, 2.0), gi, gs, gst)
        return gi, gs, gst

    return {"batch_chain_argmax": chain, "hull_parents": hull, "batch_range_chain": rchain,
            "batch_general_first": general}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--cols", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    mods = kernels.backends()
    if "cython" not in mods:
        raise SystemExit("compiled backend not built; run pip install -e . --no-build-isolation")
    rng = np.random.default_rng(0)
    print(f"{'kernel':24s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for name, fn in _cases(args.rows, args.cols, rng).items():
        tp, op = _best(lambda: fn(mods["python"]), args.repeat)
        tc, oc = _best(lambda: fn(mods["cython"]), args.repeat)
        assert all(np.array_equal(a, b) for a, b in zip(op, oc)), name
        print(f"{name:24s} {tp:10.4f} {tc:10.4f} {tp / tc:8.1f}x")

    # end-to-end sampler with the active backend, for reference
    t, _ = _best(lambda: sample_trajectories(1.0, Exponential(1.0), 5, 10_000, seed=1), args.repeat)
    print(f"sample_trajectories N=5, 1e4 reps ({kernels.BACKEND}): {t:.3f} s")


if __name__ == "__main__":
    main()
