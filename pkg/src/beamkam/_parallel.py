"""Deterministic parallel map.

Work items are mapped in their given order and results collected by index, so
the output is independent of the thread count; numpy releases the GIL in the
kernels that dominate each item.
"""

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count(requested=None):
    if requested is not None and requested > 0:
        return int(requested)
    env = os.environ.get("BEAMKAM_THREADS")
    if env:
        return max(1, int(env))
    return 1


def pmap(fn, items, threads=None):
    n = thread_count(threads)
    items = list(items)
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
