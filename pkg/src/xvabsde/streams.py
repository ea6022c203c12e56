"""Counter-addressed random streams on top of Philox4x64.

Draw ``i`` of stream ``(seed, stream_id)`` is raw Philox word ``i`` under
key ``(seed, stream_id)``. Any block of draws can therefore be produced
independently of every other block, so path generation is bit-identical
whatever the worker split.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1

ASSET_STREAM_BASE = 0x100
DEFAULT_STREAM_B = 1
DEFAULT_STREAM_C = 2


def raw_words(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """``count`` uint64 words starting at word index ``start``."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    counter, offset = divmod(int(start), 4)
    gen = np.random.Philox(key=key, counter=counter)
    return gen.random_raw(offset + int(count))[offset:]


def uniforms(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Open-interval uniforms from the top 53 bits of each word."""
    w = raw_words(seed, stream, start, count)
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Standard normals by inversion (one word per draw)."""
    return ndtri(uniforms(seed, stream, start, count))


def exponentials(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    return -np.log(uniforms(seed, stream, start, count))
