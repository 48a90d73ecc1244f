"""Pinned random streams.

Every random draw in the package goes through :class:`Stream`, which reads raw
64-bit words from NumPy's PCG64 bit generator (PCG XSL RR 128/64, O'Neill 2014).
NumPy guarantees the raw PCG64 bitstream is stable across releases, and all
derived quantities (floats, bounded integers, shuffles) are computed here from
those raw words, so results never depend on ``numpy.random.Generator`` method
internals.
"""

from __future__ import annotations

import numpy as np

_U64 = 1 << 64
_MASK64 = _U64 - 1


class Stream:
    """A deterministic stream of 64-bit words seeded by a single integer."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._bits = np.random.PCG64(self.seed)

    def next_u64(self) -> int:
        return int(self._bits.random_raw())

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, bound: int) -> int:
        """Unbiased integer in [0, bound) by rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        floor = _U64 % bound
        while True:
            x = self.next_u64()
            if x >= floor:
                return x % bound

    def bits(self, k: int) -> int:
        """``k`` independent fair bits packed into an int."""
        out = 0
        filled = 0
        while filled < k:
            take = min(64, k - filled)
            out |= (self.next_u64() & ((1 << take) - 1)) << filled
            filled += take
        return out

    def shuffle(self, items: list) -> list:
        """Fisher-Yates shuffle in place; returns ``items``."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def permutation(self, values) -> list:
        return self.shuffle(list(values))


def derive_seed(*parts: int) -> int:
    """Stable 64-bit child seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)
    return int(state[0])
