"""Seed derivation and order-preserving parallel map.

Every random stream in the package is derived from a master seed plus a
tuple of integer task keys, so results never depend on scheduling.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def seed_sequence(master: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))


def derive_seed(master: int, *keys: int) -> int:
    """64-bit seed derived from ``(master, *keys)``."""
    lo, hi = seed_sequence(master, *keys).generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def rng_for(master: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master, *keys))


def parallel_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    jobs: int = 1,
    *,
    threads: bool = False,
) -> list[R]:
    """``[fn(x) for x in items]`` with up to ``jobs`` workers, results in input order."""
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    pool_cls = ThreadPoolExecutor if threads else ProcessPoolExecutor
    with pool_cls(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def as_seed(seed: int | None) -> int:
    if seed is None:
        return 0
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed
