"""Deterministic chunked execution.

Work is cut into fixed-size chunks whose boundaries depend only on the
problem size, never on the worker count, and every chunk draws from its own
``SeedSequence`` substream. Results are reassembled in chunk order.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK_SIZE = 1 << 16


def resolve_threads(threads=None):
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return int(threads)


def chunk_bounds(total, chunk_size=CHUNK_SIZE):
    return [(lo, min(lo + chunk_size, total)) for lo in range(0, total, chunk_size)]


def substream(seed, *key):
    """Generator for the substream identified by ``key`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def map_ordered(fn, items, threads=None):
    items = list(items)
    threads = min(resolve_threads(threads), max(len(items), 1))
    if threads == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
