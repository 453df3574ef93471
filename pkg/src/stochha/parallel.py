"""Run many independent trajectories, optionally across worker processes.

Trajectory ``i`` always draws from substream ``(seed, i)``, so the merged
result is identical for every worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable

from .composed import ComposedSchedule, simulate_composed
from .decomposed import DecomposedSchedule, simulate_decomposed
from .dist import StreamCursor
from .paths import Path


def _simulator(model) -> Callable[..., Path]:
    if isinstance(model, DecomposedSchedule):
        return simulate_decomposed
    if isinstance(model, ComposedSchedule):
        return simulate_composed
    raise TypeError(f"cannot simulate {type(model).__name__}")


def _run_block(model, seed: int, start: int, stop: int, max_jumps, max_time) -> list[Path]:
    sim = _simulator(model)
    cursor = StreamCursor()
    return [sim(model, seed, max_jumps, max_time, i, cursor.at(seed, i))
            for i in range(start, stop)]


def _blocks(n: int, workers: int) -> list[tuple[int, int]]:
    # a few blocks per worker keeps the pool busy when path lengths vary
    size = max(1, math.ceil(n / (workers * 4)))
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def run_trajectories(model, seed: int, n: int, max_jumps: int | None = None,
                     max_time: float = math.inf, workers: int = 1) -> list[Path]:
    """Simulate trajectories ``0..n-1`` and return them ordered by index."""
    if n < 0:
        raise ValueError("trajectory count must be nonnegative")
    if workers <= 1 or n < 2:
        return _run_block(model, seed, 0, n, max_jumps, max_time)
    blocks = _blocks(n, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_block, model, seed, a, b, max_jumps, max_time)
                   for a, b in blocks]
        out: list[Path] = []
        for f in futures:
            out.extend(f.result())
    return out
