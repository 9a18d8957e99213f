"""Deterministic 64-bit pseudo-random primitives (SplitMix64).

All randomness in this package flows through one named generator so that
datasets and splits reproduce bit-for-bit across platforms and backends.
The generator is counter-based under the hood: the k-th output of a stream
seeded with s is mix64(s + (k+1)*GOLDEN), which lets bulk generation be
vectorized while agreeing exactly with the stateful scalar form.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_FLOAT_SCALE = 2.0**-53


def mix64(value: int) -> int:
    """Avalanche a 64-bit state word into an output word."""
    z = value & _MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Stateful scalar view of the generator."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return mix64(self._state)

    def next_float(self) -> float:
        # top 53 bits -> [0, 1)
        return (self.next_u64() >> 11) * _FLOAT_SCALE


def u64_stream(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Outputs start .. start+count-1 of the stream for this seed.

    u64_stream(s, n)[k] equals the (k+1)-th next_u64() of SplitMix64(s).
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    counters = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    # uint64 arithmetic wraps mod 2**64, matching the scalar form
    z = np.uint64(seed & _MASK64) + counters * np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
    return z ^ (z >> np.uint64(31))


def float_stream(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Same stream mapped to float64 values in [0, 1)."""
    return (u64_stream(seed, count, start) >> np.uint64(11)) * _FLOAT_SCALE


def shuffle_indices(n: int, seed: int) -> np.ndarray:
    """Fisher-Yates permutation of range(n) driven by the scalar stream.

    The draw for position i (i = n-1 down to 1) swaps i with draw % (i+1).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    idx = list(range(n))
    if n > 1:
        draws = u64_stream(seed, n - 1).tolist()
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = draws[k] % (i + 1)
            idx[i], idx[j] = idx[j], idx[i]
    return np.asarray(idx, dtype=np.int64)
