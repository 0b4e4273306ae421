"""SplitMix64, the portable generator behind block plans and codebooks.

Output ``n`` (0-based) of a stream seeded with ``s`` is
``mix(s + (n + 1) * 0x9E3779B97F4A7C15 mod 2**64)`` where ``mix`` is the
standard SplitMix64 finalizer. Both a pure-int and a vectorized numpy
version are provided; they agree bit for bit.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def splitmix64(seed: int, n: int) -> int:
    """Return output ``n`` of the stream seeded with ``seed``."""
    return mix64((seed & MASK64) + (n + 1) * GOLDEN)


def splitmix64_array(seed: int, n: np.ndarray) -> np.ndarray:
    """Vectorized :func:`splitmix64` over an integer array of stream positions."""
    n = np.asarray(n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + (n + np.uint64(1)) * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))
