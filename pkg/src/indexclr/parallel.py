"""Seeded substreams and an order-preserving parallel map.

Every random draw is taken from a generator keyed by ``(seed, *keys)`` so the
result of a unit of work never depends on which worker ran it or when.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np
from threadpoolctl import threadpool_limits

# stream tags
DATA, GRID, MULT, ORACLE = 0, 1, 2, 3


def substream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def _call_single_threaded(args):
    func, item = args
    # BLAS reductions can depend on the thread count; pin it for reproducibility
    with threadpool_limits(limits=1):
        return func(item)


def pmap(func, items, threads: int = 1) -> list:
    """``[func(x) for x in items]`` over ``threads`` worker processes, in input order."""
    items = list(items)
    jobs = [(func, item) for item in items]
    if threads <= 1 or len(items) <= 1:
        return [_call_single_threaded(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_call_single_threaded, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
