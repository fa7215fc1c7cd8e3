"""Random number streams.

All randomness flows through :class:`RngStream`.  Independent streams are derived
from a master seed with :class:`numpy.random.SeedSequence` spawn keys, so stream
``key`` of master seed ``s`` is always ``SeedSequence(s, spawn_key=key)``
regardless of how many other streams exist or which worker uses them.
"""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

__all__ = ["RngStream", "StreamBatch", "stream_for", "split_streams", "SPLITTING_RULE"]

SPLITTING_RULE = "numpy.random.SeedSequence(master_seed, spawn_key=key) -> PCG64"

Size = int | Sequence[int] | None


class RngStream:
    """A single-owner random stream (thin wrapper around a PCG64 ``Generator``)."""

    def __init__(self, seed: int | np.random.SeedSequence, key: Tuple[int, ...] = ()) -> None:
        if isinstance(seed, np.random.SeedSequence):
            seq = seed
        else:
            seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
        self.seed_sequence = seq
        self.generator = np.random.Generator(np.random.PCG64(seq))

    @property
    def key(self) -> Tuple[int, ...]:
        return tuple(self.seed_sequence.spawn_key)

    def child(self, *key: int) -> "RngStream":
        """Stream whose spawn key extends this stream's key by *key*."""
        seq = np.random.SeedSequence(self.seed_sequence.entropy, spawn_key=self.key + tuple(int(k) for k in key))
        return RngStream(seq)

    def standard_normal(self, size: Size = None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, size: Size = None) -> np.ndarray:
        return self.generator.random(size)

    def geometric(self, p: float, size: Size = None) -> np.ndarray:
        """Geometric draws supported on {1, 2, ...} with success probability *p*."""
        return self.generator.geometric(p, size)

    def exponential(self, scale: float, size: Size = None) -> np.ndarray:
        return self.generator.exponential(scale, size)

    def __repr__(self) -> str:
        return f"RngStream(entropy={self.seed_sequence.entropy}, key={self.key})"


class StreamBatch:
    """One :class:`RngStream` per batch row.

    Draws of shape ``(rows, ...)`` take row *i* from stream *i*, so a row consumes
    exactly what it would consume if it were simulated on its own.
    """

    def __init__(self, streams: Sequence[RngStream]) -> None:
        self.streams = list(streams)

    def __len__(self) -> int:
        return len(self.streams)

    def _rows(self, size: Size) -> Tuple[int, ...]:
        shape = (size,) if isinstance(size, int) else tuple(size or ())
        if not shape or shape[0] != len(self.streams):
            raise ValueError(f"StreamBatch of {len(self.streams)} streams cannot draw shape {shape}")
        return shape[1:]

    def standard_normal(self, size: Size = None) -> np.ndarray:
        tail = self._rows(size)
        return np.stack([s.standard_normal(tail or None) for s in self.streams])

    def uniform(self, size: Size = None) -> np.ndarray:
        tail = self._rows(size)
        return np.stack([np.asarray(s.uniform(tail or None)) for s in self.streams])

    def geometric(self, p: float, size: Size = None) -> np.ndarray:
        tail = self._rows(size)
        return np.stack([np.asarray(s.geometric(p, tail or None)) for s in self.streams])

    def exponential(self, scale: float, size: Size = None) -> np.ndarray:
        tail = self._rows(size)
        return np.stack([np.asarray(s.exponential(scale, tail or None)) for s in self.streams])


def stream_for(master_seed: int, *key: int) -> RngStream:
    """Return the stream with spawn key *key* of *master_seed*."""
    return RngStream(master_seed, key)


def split_streams(master_seed: int, count: int, prefix: Tuple[int, ...] = ()) -> list[RngStream]:
    """Streams ``prefix + (0,)`` ... ``prefix + (count-1,)`` of *master_seed*."""
    return [RngStream(master_seed, prefix + (i,)) for i in range(count)]
