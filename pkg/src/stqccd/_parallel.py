"""Thread-pool fan-out for nogil numba kernels."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")


def chunk_ranges(n: int, parts: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into at most ``parts`` contiguous, non-empty ranges."""
    parts = max(1, min(parts, n))
    if n <= 0:
        return []
    bounds = [n * i // parts for i in range(parts + 1)]
    return [(bounds[i], bounds[i + 1]) for i in range(parts) if bounds[i] < bounds[i + 1]]


def run_chunks(fn: Callable[[int, int], T], ranges: Sequence[tuple[int, int]], threads: int) -> list[T]:
    """Run ``fn(start, end)`` per range; results come back in range order."""
    if threads <= 1 or len(ranges) <= 1:
        return [fn(s, e) for s, e in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: fn(*r), ranges))
