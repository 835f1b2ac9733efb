"""Deterministic chunked fan-out over a thread pool.

Work is always split into the same fixed-size chunks whatever the worker
count, and results are returned in chunk order, so outputs do not depend
on scheduling or on ``GEOVORTEX_THREADS``.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count(requested=None):
    """Worker cap: explicit argument, else ``GEOVORTEX_THREADS`` (0 = auto)."""
    if requested is None:
        try:
            requested = int(os.environ.get("GEOVORTEX_THREADS", "0"))
        except ValueError:
            requested = 0
    if requested <= 0:
        requested = os.cpu_count() or 1
    return max(1, requested)


def map_chunks(func, n, chunk_size, workers=None):
    """Call ``func(start, stop)`` on consecutive chunks of ``range(n)``."""
    bounds = [(i, min(i + chunk_size, n)) for i in range(0, n, chunk_size)]
    workers = min(worker_count(workers), max(1, len(bounds)))
    if workers == 1 or len(bounds) <= 1:
        return [func(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ab: func(*ab), bounds))
