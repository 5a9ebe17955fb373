"""Ordered thread-pool mapping for batch evaluations."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

from locpoly.errors import ArgumentError

logger = logging.getLogger(__name__)

THREADS_ENV = "LOCPOLY_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def resolve_workers(requested: Optional[int] = None) -> int:
    """Number of worker threads to use.

    An explicit request wins, then ``LOCPOLY_THREADS``; 0 means one worker
    per CPU.
    """
    if requested is None:
        raw = os.environ.get(THREADS_ENV, "0")
        try:
            requested = int(raw)
        except ValueError:
            logger.warning("Ignoring non-integer %s=%r", THREADS_ENV, raw)
            requested = 0
    if requested < 0:
        raise ArgumentError(f"thread count must be >= 0, got {requested}")
    if requested == 0:
        return os.cpu_count() or 1
    return requested


def map_ordered(
    fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None
) -> list[R]:
    """Apply *fn* to every item, returning results in input order."""
    items = list(items)
    count = min(resolve_workers(workers), len(items))
    if count <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=count) as pool:
        return list(pool.map(fn, items))
