"""Optional thread parallelism for embarrassingly parallel grid scans.

CAUSTICS_THREADS caps the worker count; the default of 1 keeps runs
strictly sequential.  Results are merged in input order either way, so
outputs are byte-identical regardless of the setting.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    try:
        n = int(os.environ.get("CAUSTICS_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def thread_map(fn, items):
    """Ordered map over items, threaded when CAUSTICS_THREADS > 1."""
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
