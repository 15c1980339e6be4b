"""Worker-pool helpers for per-sample evaluation.

Results are collected in input order and reduced deterministically, so
reports are identical for any thread count; --threads 1 additionally forces
strictly serial execution.
"""

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "AVLOC_THREADS"


def resolve_threads(requested=None) -> int:
    """--threads flag, else AVLOC_THREADS, else available parallelism."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(ENV_THREADS)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(fn, items, threads: int = 1) -> list:
    """Order-preserving map over independent items."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
