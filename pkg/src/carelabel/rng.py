"""Deterministic, splittable pseudo-random numbers.

All randomness in the suite flows through :class:`SplitRng` so that every
fixture, synthetic dataset, and probe run is reproducible from a single
integer seed.  The generator is splitmix64 (a 64-bit xorshift-multiply
mixer): trivial to port, fast enough in pure Python, and bitwise
reproducible on any platform with 64-bit integers.

Streams are derived, not advanced: ``rng.split("label")`` yields an
independent child generator whose seed is a hash of the parent seed and
the label, so adding a new consumer never perturbs existing streams.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fnv1a(data: bytes, h: int = _FNV_OFFSET) -> int:
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


class SplitRng:
    """splitmix64 stream with label-based splitting."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def split(self, *labels: str | int) -> "SplitRng":
        """Derive an independent child stream keyed by the labels."""
        h = _fnv1a(self._state.to_bytes(8, "little"))
        for label in labels:
            if isinstance(label, int):
                h = _fnv1a(b"i" + (label & _MASK64).to_bytes(8, "little"), h)
            else:
                h = _fnv1a(b"s" + label.encode("utf-8"), h)
        return SplitRng(_mix(h))

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix(self._state)

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform_signed(self) -> float:
        """Uniform double in [-1, 1); exact in binary floating point."""
        return 2.0 * self.uniform() - 1.0

    def randint(self, n: int) -> int:
        """Integer in [0, n) by rejection sampling (unbiased)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def normal(self) -> float:
        """Standard normal via Box-Muller (one value per pair, spare dropped)."""
        while True:
            u1 = self.uniform()
            if u1 > 0.0:
                break
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, count: int) -> list[float]:
        return [self.normal() for _ in range(count)]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
