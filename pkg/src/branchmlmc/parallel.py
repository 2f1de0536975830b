"""Replicate sharding over a thread pool.

Shards have a fixed size and outputs are per-replicate arrays stitched back
in shard order, so results never depend on how many workers ran them.  The
compiled kernels release the GIL, which is what makes threads worthwhile.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_SHARD = 4096


def default_threads() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def shards(start: int, n: int, size: int = DEFAULT_SHARD) -> list[tuple[int, int]]:
    if size < 1:
        raise ValueError("shard size must be >= 1")
    return [(s, min(size, start + n - s)) for s in range(start, start + n, size)]


def map_replicates(fn, start: int, n: int, threads: int | None = None, size: int = DEFAULT_SHARD):
    """Run ``fn(rep_start, n_rep) -> tuple of arrays`` over shards and concatenate per output."""
    parts = shards(start, n, size)
    if not parts:
        return None
    threads = threads or default_threads()
    if threads == 1 or len(parts) == 1:
        results = [fn(s, m) for s, m in parts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda p: fn(*p), parts))
    return tuple(np.concatenate(col) for col in zip(*results))
