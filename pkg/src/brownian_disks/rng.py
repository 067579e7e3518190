"""Seeded random streams.

A stream is identified by ``(seed, stream_id)``; sub-streams for individual
components (one tree, one unit interval of a window, one replica) are
derived by extending the spawn key, so every draw is reproducible and
streams with different keys are independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0
    path: tuple = ()

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be nonnegative")

    def generator(self, *keys: int) -> np.random.Generator:
        """Fresh generator for the sub-stream ``keys`` (same keys, same draws)."""
        key = (self.stream_id, *self.path, *(int(k) for k in keys))
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=key)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: int) -> "RngStream":
        """Sub-stream that can itself be split further."""
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(k) for k in keys))


def as_generator(rng) -> np.random.Generator:
    """Accept an :class:`RngStream`, a numpy ``Generator`` or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


def as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError("a keyed RngStream (or integer seed) is required here")
