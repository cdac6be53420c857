"""Thread-based fan-out for independent evaluations."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("PERWAVE_JOBS", "1")))
    except ValueError:
        return 1


def map_jobs(fn, items, jobs: int | None = None) -> list:
    """``[fn(x) for x in items]``, run on up to ``jobs`` threads, order preserved."""
    items = list(items)
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    if jobs == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
