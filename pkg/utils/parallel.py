import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable, Iterator, List, Sequence, TypeVar

from threadpoolctl import threadpool_limits

from core.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int | None = None) -> List[R]:
    """map que conserva el orden; con un hilo no crea pool"""
    workers = max(1, threads if threads is not None else settings.THREADS)
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


@contextmanager
def single_threaded_blas() -> Iterator[None]:
    """Fija BLAS a un hilo: las reducciones de matmul quedan bit-reproducibles"""
    with threadpool_limits(limits=1, user_api="blas"):
        yield
