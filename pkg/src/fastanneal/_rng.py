"""Random stream derivation.

Every stream is a PCG64 generator seeded from ``SeedSequence(seed, spawn_key=key)``.
A single annealing run uses ``key=()``; replication block ``k`` of an
experiment uses ``key=(k,)``; sub-experiments nest a tag before the block
index, e.g. ``(tag, k)``.  Streams therefore depend only on the root seed and
the key, never on thread scheduling.
"""
from __future__ import annotations

import numpy as np


def make_rng(seed: int, *key: int) -> np.random.Generator:
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def blocks(total: int, block_size: int) -> list[tuple[int, int]]:
    """Split ``range(total)`` into contiguous ``(start, stop)`` blocks."""
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    return [(s, min(s + block_size, total)) for s in range(0, total, block_size)]


def map_ordered(fn, items, threads: int = 1):
    """``list(map(fn, items))``, optionally on a thread pool; order preserved."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
