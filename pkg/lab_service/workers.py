import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from lab_service.errors import ArgumentError

logger = logging.getLogger(__name__)

THREADS_ENV = "LPLAB_THREADS"
THREAD_PREFIX = "lplab"

T = TypeVar("T")
R = TypeVar("R")

_thread_cap: Optional[int] = None
worker_pool: Optional[ThreadPoolExecutor] = None


def set_thread_cap(threads: Optional[int]) -> None:
    """Cap internal parallelism; ``None`` falls back to the environment."""
    global _thread_cap, worker_pool
    if threads is not None and threads < 1:
        raise ArgumentError("thread cap must be >= 1", threads=threads)
    _thread_cap = threads
    if worker_pool is not None:
        worker_pool.shutdown(wait=True)
        worker_pool = None


def get_thread_cap() -> int:
    if _thread_cap is not None:
        return _thread_cap
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}")
    return 1


def get_worker_pool() -> ThreadPoolExecutor:
    global worker_pool
    if worker_pool is None:
        cap = get_thread_cap()
        logger.debug(f"🚀 Starting worker pool with {cap} threads")
        worker_pool = ThreadPoolExecutor(max_workers=cap, thread_name_prefix=THREAD_PREFIX)
    return worker_pool


def parallel_map(func: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Map in input order; serial when the cap is 1 or when already on a pool thread."""
    items = list(items)
    nested = threading.current_thread().name.startswith(THREAD_PREFIX)
    if nested or get_thread_cap() <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    return list(get_worker_pool().map(func, items))
