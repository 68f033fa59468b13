"""Shared worker pools for the data-parallel kernels."""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor

_pools: dict[int, ThreadPoolExecutor] = {}
_lock = threading.Lock()


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _pool(workers: int) -> ThreadPoolExecutor:
    with _lock:
        pool = _pools.get(workers)
        if pool is None:
            pool = _pools[workers] = ThreadPoolExecutor(workers, thread_name_prefix="sparsebench")
        return pool


def pmap(fn, items, workers: int) -> list:
    """Map ``fn`` over ``items`` on ``workers`` threads; results keep input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    return list(_pool(workers).map(fn, items))


def even_splits(total: int, parts: int):
    """Boundaries of ``parts`` contiguous ranges over ``total`` items whose
    sizes differ by at most one."""
    parts = max(parts, 1)
    base, extra = divmod(total, parts)
    bounds = [0]
    for p in range(parts):
        bounds.append(bounds[-1] + base + (1 if p < extra else 0))
    return bounds
