# -*- coding: utf-8 -*-
"""
Параллельная обработка по изображениям: семафор + gather, порядок результатов = порядок входа.
"""

from __future__ import annotations

import asyncio
import logging
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


async def _map_async(func: Callable[[T], R], items: list[T], workers: int) -> list[R]:
    semaphore = asyncio.Semaphore(workers)

    async def process_with_limit(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(func, item)

    tasks = [process_with_limit(item) for item in items]
    return await asyncio.gather(*tasks)


def map_ordered(func: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Применить func к каждому элементу; при workers > 1 - в потоках, не более workers одновременно"""
    items = list(items)
    if workers < 1:
        raise ValueError("workers должно быть >= 1")
    if workers == 1 or len(items) < 2:
        return [func(item) for item in items]
    logger.debug(f"Параллельная обработка {len(items)} элементов в {workers} потоках")
    return asyncio.run(_map_async(func, items, workers))
