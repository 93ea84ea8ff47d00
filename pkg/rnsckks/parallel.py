"""
Worker Pool
===========
Shared thread pool for chunked numpy kernels.
"""

import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor

from .config import get_config

logger = logging.getLogger(__name__)

_lock = threading.Lock()
_executor = None
_threads = None
_local = threading.local()


def worker_count():
    """Configured worker cap; 0 in config means one per core"""
    if _threads is not None:
        return _threads
    configured = int(get_config().get('threads', 0))
    return configured if configured > 0 else (os.cpu_count() or 1)


def set_threads(n):
    """Cap the number of workers (CLI --threads); rebuilds the pool on next use"""
    global _threads, _executor
    with _lock:
        _threads = max(1, int(n))
        if _executor is not None:
            _executor.shutdown(wait=True)
            _executor = None
    logger.info(f"Worker cap set to {_threads}")


def _get_executor():
    global _executor
    with _lock:
        if _executor is None:
            _executor = ThreadPoolExecutor(max_workers=worker_count(),
                                           thread_name_prefix='rnsckks')
        return _executor


def _run_marked(fn, item):
    _local.in_worker = True
    try:
        return fn(item)
    finally:
        _local.in_worker = False


def parallel_map(fn, items):
    """Apply fn to every item, in parallel when more than one worker and chunk exist

    Calls made from inside a worker run inline so nested kernels never wait on the pool.
    """
    items = list(items)
    if worker_count() <= 1 or len(items) <= 1 or getattr(_local, 'in_worker', False):
        return [fn(item) for item in items]
    executor = _get_executor()
    return list(executor.map(lambda item: _run_marked(fn, item), items))
