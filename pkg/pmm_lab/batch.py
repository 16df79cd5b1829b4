"""Worker pool for independent work items (replicas, certificates, instances)."""
from __future__ import annotations

import asyncio
import logging
from collections.abc import Callable, Iterable
from concurrent.futures import ProcessPoolExecutor
from typing import TypeVar

_LOGGER = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


async def _gather(jobs: int, func: Callable[[T], R], items: list[T]) -> list[R]:
    loop = asyncio.get_running_loop()
    sem = asyncio.Semaphore(jobs)

    with ProcessPoolExecutor(max_workers=jobs) as pool:

        async def run_one(item: T) -> R:
            async with sem:
                return await loop.run_in_executor(pool, func, item)

        return await asyncio.gather(*(run_one(item) for item in items))


async def run_batch_async(
    jobs: int, func: Callable[[T], R], items: Iterable[T]
) -> list[R]:
    """Apply func to every item on up to `jobs` worker processes.

    Results come back in input order. func and the items must be picklable
    when jobs > 1.
    """
    items = list(items)
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    if jobs == 1 or len(items) <= 1:
        return [func(item) for item in items]
    _LOGGER.debug("Fanning out %d items over %d workers", len(items), jobs)
    return await _gather(min(jobs, len(items)), func, items)


def run_batch(jobs: int, func: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Blocking wrapper around run_batch_async for synchronous callers."""
    return asyncio.run(run_batch_async(jobs, func, items))
