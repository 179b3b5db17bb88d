"""Counter-based random streams.

Every random draw is keyed by ``(seed, stream, block)`` through a Philox
generator, so a Monte-Carlo run is split into fixed-size shot blocks whose
content never depends on how many workers evaluate them.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

BLOCK_SHOTS = 4096
_MASK64 = (1 << 64) - 1


def stream_id(name: str) -> int:
    """Stable 32-bit id for a named random stream."""
    return zlib.crc32(name.encode("utf-8"))


def block_generator(seed: int, stream: int | str, block: int = 0) -> np.random.Generator:
    if isinstance(stream, str):
        stream = stream_id(stream)
    key = np.array([seed & _MASK64, ((stream & 0xFFFFFFFF) << 32) | (block & 0xFFFFFFFF)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Ordered map; ``workers > 1`` evaluates items on a thread pool."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def sample_blocks(draw: Callable[[np.random.Generator, int], np.ndarray], shots: int,
                  seed: int, stream: int | str, workers: int = 1) -> np.ndarray:
    """Run ``draw(rng, n)`` over fixed shot blocks and concatenate in block order."""
    if shots < 0:
        raise ValueError("shots must be non-negative")
    sizes = [BLOCK_SHOTS] * (shots // BLOCK_SHOTS)
    if shots % BLOCK_SHOTS:
        sizes.append(shots % BLOCK_SHOTS)

    def run(block):
        return draw(block_generator(seed, stream, block), sizes[block])

    parts = parallel_map(run, list(range(len(sizes))), workers)
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)
