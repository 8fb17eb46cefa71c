import os
import subprocess
import sys

import numpy as np
import pytest

from relay_sim import kernels

BACKENDS = kernels.backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")


def _rows(rng, B=64, K=40):
    X = np.ascontiguousarray(np.cumsum(rng.exponential(1.0, (B, K)), axis=1))
    H = np.ascontiguousarray(rng.exponential(1.0, (B, K)))
    return X, H


@needs_both
@pytest.mark.parametrize("seed", range(5))
def test_batch_chain_argmax_equivalence(seed):
    rng = np.random.default_rng(seed)
    X, H = _rows(rng)
    B = X.shape[0]
    start = rng.integers(0, 10, B).astype(np.int64)
    out = {}
    for name, mod in BACKENDS.items():
        idx = np.full((B, 6), -1, dtype=np.int64)
        cnt = np.zeros(B, dtype=np.int64)
        mod.batch_chain_argmax(X, H, start, np.zeros(B), np.zeros(B), 6, 1.5, idx, cnt)
        out[name] = (idx, cnt)
    assert np.array_equal(out["python"][0], out["cython"][0])
    assert np.array_equal(out["python"][1], out["cython"][1])


@needs_both
def test_hull_parents_equivalence():
    rng = np.random.default_rng(1)
    x = np.cumsum(rng.exponential(1.0, 500))
    h = rng.exponential(1.0, 500)
    res = {}
    for name, mod in BACKENDS.items():
        out = np.empty(500, dtype=np.int64)
        mod.hull_parents(x, h, out)
        res[name] = out
    assert np.array_equal(res["python"], res["cython"])


@needs_both
def test_range_kernels_equivalence():
    rng = np.random.default_rng(2)
    X, H = _rows(rng)
    B = X.shape[0]
    qx = np.ascontiguousarray(rng.uniform(0, 20, 30))
    qy = np.ascontiguousarray(rng.uniform(0, 2, 30))
    res = {}
    for name, mod in BACKENDS.items():
        t = np.empty(30, dtype=np.int64)
        mod.range_targets(X[0], H[0], qx, qy, 2.0, t)
        idx = np.full((B, 10), -1, dtype=np.int64)
        cnt = np.zeros(B, dtype=np.int64)
        st = np.zeros(B, dtype=np.int64)
        mod.batch_range_chain(X, H, np.zeros(B), np.zeros(B), 2.0, 10, idx, cnt, st)
        up = np.ascontiguousarray(np.sqrt(np.maximum(4 - X**2, 0)))
        lo = np.ascontiguousarray(-up)
        gi = np.zeros(B, dtype=np.int64)
        gs = np.zeros(B, dtype=np.int64)
        gst = np.zeros(B, dtype=np.int64)
        mod.batch_general_first(X, H, up, lo, np.zeros(B), np.zeros(B), np.full(B, 2.0), gi, gs, gst)
        res[name] = (t, idx, cnt, st, gi, gs, gst)
    for a, b in zip(res["python"], res["cython"]):
        assert np.array_equal(a, b)


def test_pure_backend_selected_by_env():
    env = dict(os.environ, RELAY_SIM_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from relay_sim import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_pure_backend_reproduces_samples():
    code = ("from relay_sim.blockage import sample_trajectories; from relay_sim.heights import Exponential;"
            "r = sample_trajectories(1.0, Exponential(1.0), 4, 300, seed=9); print(r['X'].tobytes().hex())")
    outs = []
    for pure in ("1", "0"):
        env = dict(os.environ, RELAY_SIM_PURE=pure)
        outs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                                   check=True).stdout)
    assert outs[0] == outs[1]
