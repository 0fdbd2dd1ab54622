"""Seeded chunked execution of Monte Carlo work.

Every chunk draws from its own generator derived from (seed, chunk index),
so results depend on the seed and the chunk size but never on how many
workers run the chunks.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

from schro_ldp.config import DEFAULT_CHUNK_SIZE, THREADS
from schro_ldp.errors import ValidationError

logger = logging.getLogger(__name__)

T = TypeVar("T")


def chunk_sizes(n: int, chunk_size: int = DEFAULT_CHUNK_SIZE) -> list[int]:
    """Split n draws into consecutive chunks of at most chunk_size."""
    if n < 0:
        raise ValidationError(f"n must be nonnegative, got {n}.")
    if chunk_size < 1:
        raise ValidationError(f"chunk_size must be positive, got {chunk_size}.")
    full, rest = divmod(n, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def chunk_rng(seed: int, index: int, stream: tuple[int, ...] = ()) -> np.random.Generator:
    """Generator for one chunk; `stream` separates independent runs sharing a seed."""
    return np.random.default_rng([int(seed), *(int(s) for s in stream), int(index)])


def map_chunks(
    fn: Callable[[int, np.random.Generator], T],
    n: int,
    seed: int,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int | None = None,
    stream: tuple[int, ...] = (),
) -> list[T]:
    """Run fn(size, rng) for every chunk and return the results in chunk order."""
    sizes = chunk_sizes(n, chunk_size)
    workers = min(workers or THREADS, max(1, len(sizes)))
    tasks = [(size, chunk_rng(seed, k, stream)) for k, size in enumerate(sizes)]
    logger.debug("running %d chunks on %d workers (seed=%d)", len(tasks), workers, seed)
    if workers == 1:
        return [fn(size, rng) for size, rng in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda task: fn(*task), tasks))


def concat_chunks(results: list[np.ndarray]) -> np.ndarray:
    return np.concatenate(results, axis=0)
