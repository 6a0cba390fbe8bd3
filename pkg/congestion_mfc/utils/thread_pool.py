from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from congestion_mfc.utils.settings import get_settings

T = TypeVar("T")
R = TypeVar("R")

CPU_POOL_VAL = ThreadPoolExecutor(max_workers=get_settings().workers)


def map_ordered(func: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """
    Run func over items on the shared pool and return results in input order.
    numpy releases the GIL inside its kernels, so particle blocks overlap.
    """
    futures = [CPU_POOL_VAL.submit(func, item) for item in items]
    return [f.result() for f in futures]
