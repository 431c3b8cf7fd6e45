"""Deterministic random number generation.

All randomness in an episode flows through SplitMix64 generators. A master
seed is split into named substreams (world, channel, drift, ood) by hashing
the stream name together with the seed, so changing the draws of one
subsystem never perturbs another. The generator is specified by algorithm,
not by library, so any implementation can reproduce identical streams.
"""

from __future__ import annotations

import struct

_MASK64 = 0xFFFFFFFFFFFFFFFF

FNV64_OFFSET_BASIS = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash; the empty string hashes to the offset basis."""
    h = FNV64_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


class SplitMix64:
    """SplitMix64 generator (Steele/Lea/Flood mixing constants)."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def bernoulli(self, p: float) -> bool:
        """One draw per call regardless of p, so stream positions stay aligned."""
        return self.random() < p

    def randrange(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randrange bound must be positive")
        return self.next_u64() % n

    def choice_weighted(self, weights: list[float]) -> int:
        """Index drawn proportionally to weights, scanned in index order."""
        total = 0.0
        for w in weights:
            total += w
        u = self.random() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if u < acc:
                return i
        return len(weights) - 1

    def binomial(self, n: int, p: float) -> int:
        """Binomial(n, p) via inverse-CDF walk; one uniform draw."""
        if p <= 0.0:
            return 0
        if p >= 1.0:
            return n
        u = self.random()
        q = 1.0 - p
        ratio = p / q
        pmf = q**n
        acc = pmf
        k = 0
        while u >= acc and k < n:
            pmf *= ratio * (n - k) / (k + 1)
            acc += pmf
            k += 1
        return k


def substream(seed: int, name: str) -> SplitMix64:
    """Derive an independent named substream from a master seed."""
    child_seed = fnv1a64(struct.pack("<Q", seed & _MASK64) + name.encode("utf-8"))
    return SplitMix64(child_seed)
