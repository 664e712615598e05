"""Counter-based random streams (SplitMix64).

A walker's k-th draw (k = 1, 2, ...) is ``mix64(key + k * GOLDEN)`` modulo
2^64, where ``mix64`` is the SplitMix64 finalizer. The key of walker ``w``
(0 or 1) in stream ``s`` of a campaign seeded with ``master_seed`` is::

    base = mix64(master_seed + GOLDEN)
    key  = mix64(base ^ mix64((2*s + w + 1) * STREAM_GAMMA))

Because draws are indexed by a counter, a trajectory can be generated
sequentially (numba kernel) or all at once (numpy), with identical results.
Each lattice step consumes exactly one 64-bit draw: the direction index in
``[0, 2d)`` is ``((draw >> 32) * 2d) >> 32``; index ``2k`` moves +1 along
axis ``k`` and ``2k + 1`` moves -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
STREAM_GAMMA = 0xD1B54A32D192ED03
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64_int(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64).copy()
    z ^= z >> np.uint64(30)
    z *= np.uint64(_M1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_M2)
    z ^= z >> np.uint64(31)
    return z


@njit
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


@njit
def draw_direction(key, counter, two_d):
    u = mix64(key + counter * np.uint64(GOLDEN))
    return np.int64(((u >> np.uint64(32)) * np.uint64(two_d)) >> np.uint64(32))


def walker_keys(master_seed: int, streams, walker: int) -> np.ndarray:
    """Keys for ``walker`` (0 or 1) across an array of stream indices."""
    if walker not in (0, 1):
        raise ValueError("walker must be 0 or 1")
    streams = np.asarray(streams, dtype=np.int64)
    if streams.size and streams.min() < 0:
        raise ValueError("stream indices must be nonnegative")
    base = np.uint64(mix64_int(int(master_seed) + GOLDEN))
    idx = streams.astype(np.uint64) * np.uint64(2) + np.uint64(walker + 1)
    return mix64_array(base ^ mix64_array(idx * np.uint64(STREAM_GAMMA)))


def draws(key: int, count: int, start: int = 1) -> np.ndarray:
    """Raw 64-bit draws number ``start .. start+count-1`` of one walker key."""
    k = np.arange(start, start + count, dtype=np.uint64)
    return mix64_array(np.uint64(key) + k * np.uint64(GOLDEN))


def directions(key: int, count: int, dim: int, start: int = 1) -> np.ndarray:
    """Direction indices in ``[0, 2*dim)`` for steps ``start .. start+count-1``."""
    u = draws(key, count, start)
    return (((u >> np.uint64(32)) * np.uint64(2 * dim)) >> np.uint64(32)).astype(np.int64)


@dataclass(frozen=True)
class RngStream:
    """One reproducible stream: a pair of walker keys derived from (seed, index)."""

    master_seed: int
    stream_index: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= MASK64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if int(self.stream_index) < 0:
            raise ValueError("stream_index must be nonnegative")

    def key(self, walker: int = 0) -> int:
        return int(walker_keys(self.master_seed, [self.stream_index], walker)[0])

    def generator(self, walker: int = 0) -> "CounterGenerator":
        return CounterGenerator(self.key(walker))


class CounterGenerator:
    """Sequential view of a walker key; ``counter`` is the number of draws used."""

    def __init__(self, key: int, counter: int = 0):
        self.key = int(key) & MASK64
        self.counter = counter

    def next_u64(self) -> int:
        self.counter += 1
        return mix64_int(self.key + self.counter * GOLDEN)

    def direction(self, dim: int) -> int:
        return ((self.next_u64() >> 32) * (2 * dim)) >> 32
