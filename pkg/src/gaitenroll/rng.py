"""Deterministic random number generation.

Every stochastic result in this package is a pure function of (seed, call
sequence). A 64-bit seed is expanded by splitmix64 into the 256-bit state of
an xoshiro256++ stream; uniforms take the top 53 bits of each output word;
Gaussians apply Box-Muller to consecutive uniform pairs. Pure integer
arithmetic, so sequences are identical on every platform.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_UNIT = 2.0**-53


def splitmix64_next(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state once; returns (new_state, output word)."""
    state = (state + _SPLITMIX_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def splitmix64_stream(seed: int, n: int) -> list[int]:
    """First n splitmix64 output words for the given seed."""
    state = seed & _MASK64
    out = []
    for _ in range(n):
        state, word = splitmix64_next(state)
        out.append(word)
    return out


class Rng:
    """xoshiro256++ stream whose state is seeded via splitmix64 expansion."""

    __slots__ = ("_s0", "_s1", "_s2", "_s3")

    def __init__(self, seed: int):
        s = splitmix64_stream(seed, 4)
        self._s0, self._s1, self._s2, self._s3 = s

    def next_u64(self) -> int:
        """Next 64-bit output word."""
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        x = (s0 + s3) & _MASK64
        result = ((((x << 23) & _MASK64) | (x >> 41)) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) & _MASK64) | (s3 >> 19)
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return result

    def uniform(self) -> float:
        """One float uniform in [0, 1): top 53 bits of the next word."""
        return (self.next_u64() >> 11) * _UNIT

    def uniforms(self, n: int) -> np.ndarray:
        """n uniforms in [0, 1) as a float64 array (bulk of uniform())."""
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        words = [0] * n
        mask = _MASK64
        for i in range(n):
            x = (s0 + s3) & mask
            words[i] = ((((x << 23) & mask) | (x >> 41)) + s0) & mask
            t = (s1 << 17) & mask
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) & mask) | (s3 >> 19)
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return (np.array(words, dtype=np.uint64) >> np.uint64(11)) * _UNIT

    def gaussians(self, n: int) -> np.ndarray:
        """n standard normals; each consecutive uniform pair yields two values.

        Box-Muller: with u1, u2 the pair, radius = sqrt(-2 ln(1 - u1)) and the
        pair maps to radius * (cos, sin)(2 pi u2). For odd n the second value
        of the last pair is discarded.
        """
        npairs = (n + 1) // 2
        u = self.uniforms(2 * npairs)
        radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        theta = (2.0 * math.pi) * u[1::2]
        z = np.empty(2 * npairs, dtype=np.float64)
        z[0::2] = radius * np.cos(theta)
        z[1::2] = radius * np.sin(theta)
        return z[:n]

    def gaussian(self) -> float:
        """One standard normal draw (consumes one full uniform pair)."""
        return float(self.gaussians(1)[0])

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection on top bits."""
        if n <= 0:
            raise ValueError(f"randbelow requires n >= 1, got {n}")
        k = (n - 1).bit_length()
        if k == 0:
            return 0
        while True:
            r = self.next_u64() >> (64 - k)
            if r < n:
                return r

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def choose(self, items: list, k: int) -> list:
        """k distinct items, sampled without replacement."""
        if k > len(items):
            raise ValueError(f"cannot choose {k} from {len(items)} items")
        pool = list(items)
        self.shuffle(pool)
        return pool[:k]
