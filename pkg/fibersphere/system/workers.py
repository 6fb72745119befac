"""Optional thread pool for independent per-point work."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

WORKERS_ENV = "FIBERSPHERE_WORKERS"
MAX_WORKERS = 64

logger = logging.getLogger('Pipeline')

T = TypeVar("T")
R = TypeVar("R")


def env_int(key: str, default: int, minimum: int, maximum: Optional[int] = None) -> int:
    """Integer from the environment, clamped to [minimum, maximum]; default when unset or malformed."""

    raw = os.getenv(key)
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw)
    except (TypeError, ValueError):
        logger.warning("Ignoring %s=%r (not an integer); using %d", key, raw, default)
        return default
    value = max(minimum, value)
    return value if maximum is None else min(maximum, value)


def default_workers() -> int:
    return env_int(WORKERS_ENV, 1, 1, MAX_WORKERS)


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """Apply fn to every item, results in input order.

    Runs inline for a single worker, otherwise on a thread pool.
    """

    items = list(items)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
