"""Chunked element loops with an order-independent scatter-add.

Chunk boundaries depend only on the item count and chunk size, never on the
worker count, and partial results are combined in chunk order. Serial and
threaded runs are therefore bit-identical.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

DEFAULT_CHUNK = 128


def default_workers() -> int:
    env = os.environ.get("LCFSHAPE_THREADS")
    return max(1, int(env)) if env else 1


def chunks(n: int, size: int = DEFAULT_CHUNK) -> list[slice]:
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def map_chunks(fn: Callable[[slice], T], n: int, workers: int | None = None,
               size: int = DEFAULT_CHUNK) -> Sequence[T]:
    """Apply ``fn`` to consecutive element slices, results in chunk order."""
    parts = chunks(n, size)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(parts) <= 1:
        return [fn(p) for p in parts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, parts))
