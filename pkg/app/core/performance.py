# core/performance.py
"""
Deterministic parallel execution.

Work units are dispatched to a joblib thread pool (numpy/LAPACK release the
GIL) and always consumed in submission order, so a reduction over the
results is independent of the worker count. With more than one worker the
BLAS pools are pinned to one thread each to avoid oversubscription.
"""

import logging
import os
from typing import Callable, Iterable, Iterator, Optional, TypeVar

from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from config.constants import THREADS_ENV_VAR

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def resolve_threads(threads: Optional[int] = None) -> int:
    """CLI value > THERMALEQ_THREADS > 1."""
    if threads is None:
        env_value = os.getenv(THREADS_ENV_VAR)
        try:
            threads = int(env_value) if env_value else 1
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV_VAR}={env_value!r}")
            threads = 1
    return max(1, int(threads))


def ordered_map(func: Callable[[T], R], items: Iterable[T], n_jobs: int = 1) -> Iterator[R]:
    """
    Yield func(item) for every item, in input order.

    n_jobs == 1 runs inline (no pool, no BLAS pinning). Otherwise a joblib
    thread pool is used and results stream back in submission order.
    """
    n_jobs = max(1, int(n_jobs))
    if n_jobs == 1:
        for item in items:
            yield func(item)
        return

    with threadpool_limits(limits=1, user_api="blas"):
        runner = Parallel(n_jobs=n_jobs, prefer="threads", return_as="generator")
        for result in runner(delayed(func)(item) for item in items):
            yield result
