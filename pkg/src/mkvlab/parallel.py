"""Replica fan-out over a thread pool.

Simulation kernels release the GIL and replicas own disjoint noise
streams, so results are identical for any worker count; the knob only
changes wall-clock time.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, count: int, threads: int) -> list:
    """[fn(0), ..., fn(count-1)], evaluated on up to ``threads`` workers."""
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))
