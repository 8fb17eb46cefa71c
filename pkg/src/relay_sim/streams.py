"""Deterministic random substreams and the blocked replication map.

Replications are grouped in fixed-size blocks; block ``j`` always draws from
``SeedSequence(seed, spawn_key=(j,))``.  Results are therefore a function of
``(seed, n_reps, block_size)`` only, whatever the number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable

import numpy as np

DEFAULT_BLOCK = 8192


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(block),))))


def rep_rng(seed: int, rep: int) -> np.random.Generator:
    """Stream of a single replication, for per-replication (non-blocked) loops."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(1 << 40, int(rep)))))


def default_workers() -> int:
    env = os.environ.get("RELAY_SIM_THREADS")
    if env:
        return max(1, int(env))
    return 1


def _run_block(args):
    fn, seed, j, n = args
    return fn(block_rng(seed, j), n)


def block_sizes(n_reps: int, block: int = DEFAULT_BLOCK) -> list[int]:
    full, rest = divmod(int(n_reps), block)
    return [block] * full + ([rest] if rest else [])


def mc_map(fn: Callable, n_reps: int, seed: int, block: int = DEFAULT_BLOCK, workers: int | None = None):
    """Run ``fn(rng, n) -> dict[str, ndarray]`` over blocks and concatenate in block order.

    ``fn`` must be picklable when ``workers > 1``.
    """
    sizes = block_sizes(n_reps, block)
    tasks = [(fn, seed, j, n) for j, n in enumerate(sizes)]
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(tasks) <= 1:
        parts = [_run_block(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
            parts = list(ex.map(_run_block, tasks))
    if not parts:
        return {}
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
