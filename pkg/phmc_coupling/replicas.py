"""Bounded worker pool for replica computations.

Tasks are chunked and dispatched to a thread pool behind an ``asyncio.Semaphore``;
results are gathered back in task order, so the output never depends on the number
of workers.  The worker count comes from ``PHMC_THREADS`` when set, else from the
caller, else from the CPU count.
"""

from __future__ import annotations

import asyncio
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from itertools import islice
from typing import Callable, List, Sequence, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

__all__ = ["resolve_workers", "run_replicas"]

T = TypeVar("T")
R = TypeVar("R")

ENV_THREADS = "PHMC_THREADS"


def resolve_workers(workers: int | None = None) -> int:
    env = os.getenv(ENV_THREADS)
    if env:
        try:
            value = int(env)
        except ValueError:
            logger.warning("Ignoring %s=%r (not an integer)", ENV_THREADS, env)
        else:
            if value >= 1:
                return value
            logger.warning("Ignoring %s=%r (must be >= 1)", ENV_THREADS, env)
    if workers is not None and workers >= 1:
        return int(workers)
    return max(1, min(8, os.cpu_count() or 1))


async def _run_chunk(
    fn: Callable[[T], R],
    chunk: List[T],
    sem: asyncio.Semaphore,
    executor: ThreadPoolExecutor,
    bar: tqdm,
) -> List[R]:
    loop = asyncio.get_running_loop()
    async with sem:
        results = await loop.run_in_executor(executor, lambda: [fn(task) for task in chunk])
    bar.update(len(chunk))
    return results


async def _run_all(fn: Callable[[T], R], tasks: Sequence[T], workers: int, chunk_size: int, progress: bool, desc: str) -> List[R]:
    sem = asyncio.Semaphore(workers)
    with ThreadPoolExecutor(max_workers=workers) as executor, tqdm(
        total=len(tasks), disable=not progress, desc=desc, leave=False
    ) as bar:
        pending = iter(tasks)
        jobs = []
        while chunk := list(islice(pending, chunk_size)):
            jobs.append(_run_chunk(fn, chunk, sem, executor, bar))
        gathered = await asyncio.gather(*jobs)
    return [result for chunk in gathered for result in chunk]


def run_replicas(
    fn: Callable[[T], R],
    tasks: Sequence[T],
    *,
    workers: int | None = None,
    chunk_size: int = 1,
    progress: bool = False,
    desc: str = "replicas",
) -> List[R]:
    """Apply *fn* to every task on a worker pool and return results in task order.

    Args:
        fn: Pure function of one task; it must own every random stream it uses.
        tasks: Work items.
        workers: Requested worker count (``PHMC_THREADS`` takes precedence).
        chunk_size: Tasks handed to a worker at a time.
        progress: Show a tqdm progress bar.
        desc: Progress-bar label.
    """
    tasks = list(tasks)
    if not tasks:
        return []
    count = resolve_workers(workers)
    if count == 1:
        return [fn(task) for task in tqdm(tasks, disable=not progress, desc=desc, leave=False)]
    logger.debug("Dispatching %d tasks to %d workers", len(tasks), count)
    return asyncio.run(_run_all(fn, tasks, count, max(1, chunk_size), progress, desc))
