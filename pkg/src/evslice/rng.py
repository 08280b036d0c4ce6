"""SplitMix64 generator with a fixed, documented output sequence.

State advance: ``state += 0x9E3779B97F4A7C15 (mod 2**64)``; output is the
standard SplitMix64 finaliser of the new state. Bounded integers use rejection
sampling on the top of the 64-bit range, so draws are exactly uniform and the
sequence is reproducible in any language with 64-bit unsigned arithmetic.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    @classmethod
    def keyed(cls, seed: int, key: int) -> "SplitMix64":
        """Independent stream for ``(seed, key)``, e.g. one per slice index."""
        return cls(mix64(seed + GOLDEN_GAMMA * (key + 1)))

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def integer(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range ``[lo, hi]``."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.below(hi - lo + 1)
