"""Worker-thread configuration for the parallel kernels.

Kernels split work into contiguous row blocks whose results are written to
disjoint output slices, so the result never depends on the worker count.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

_threads = None
_deterministic = True
_pools = {}


def default_threads():
    return os.cpu_count() or 1


def get_threads():
    return _threads or default_threads()


def set_threads(n):
    global _threads
    if n is not None and n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = n


@contextmanager
def using_threads(n):
    """Temporarily set the worker count (``None`` leaves it unchanged)."""
    global _threads
    saved = _threads
    if n is not None:
        set_threads(n)
    try:
        yield get_threads()
    finally:
        _threads = saved


def is_deterministic():
    return _deterministic


@contextmanager
def determinism(flag):
    """Select fixed-order reductions (True) or library-threaded BLAS (False)."""
    global _deterministic
    saved = _deterministic
    _deterministic = bool(flag)
    try:
        yield
    finally:
        _deterministic = saved


def _pool(n):
    pool = _pools.get(n)
    if pool is None:
        pool = _pools[n] = ThreadPoolExecutor(max_workers=n, thread_name_prefix="dashsvd")
    return pool


def run_blocks(fn, blocks):
    """Call ``fn(start, stop)`` for every block, in parallel when threads > 1."""
    n = min(get_threads(), len(blocks))
    if n <= 1:
        for start, stop in blocks:
            fn(start, stop)
        return
    futures = [_pool(n).submit(fn, start, stop) for start, stop in blocks]
    for f in futures:
        f.result()


def even_blocks(total, parts):
    parts = max(1, min(parts, total))
    edges = [total * i // parts for i in range(parts + 1)]
    return [(edges[i], edges[i + 1]) for i in range(parts) if edges[i] < edges[i + 1]]
