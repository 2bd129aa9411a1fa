"""Deterministic 64-bit shift-register random number generator.

Every stochastic component of the package (search engines, dataset
shuffling, k-means seeding) draws from an explicitly seeded stream of this
generator, so runs reproduce bit-for-bit across platforms and Python
versions. The core is the xorshift64* generator: a 64-bit linear shift
register (shifts 12/25/27) whose output is scrambled by multiplication
with the constant 0x2545F4914F6CDD1D. State is initialized from the seed
through one round of the splitmix64 mixer, which also makes seed 0 legal.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_XORSHIFT_MULT = 0x2545F4914F6CDD1D


def splitmix64(x: int) -> int:
    """One round of the splitmix64 mixer; also used for stateless hashing."""
    x = (x + _SPLITMIX_GAMMA) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


class Rng:
    """Seeded xorshift64* stream with the few draw primitives the package needs."""

    def __init__(self, seed: int):
        self._state = splitmix64(seed & MASK64)
        if self._state == 0:  # xorshift state must never be zero
            self._state = _SPLITMIX_GAMMA

    def next_u64(self) -> int:
        x = self._state
        x ^= (x >> 12)
        x = (x ^ (x << 25)) & MASK64
        x ^= (x >> 27)
        self._state = x
        return (x * _XORSHIFT_MULT) & MASK64

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n); unbiased via rejection sampling."""
        if n <= 0:
            raise ValueError("randrange() bound must be positive")
        bound = MASK64 + 1 - (MASK64 + 1) % n
        while True:
            draw = self.next_u64()
            if draw < bound:
                return draw % n

    def randint(self, a: int, b: int) -> int:
        """Uniform integer in [a, b], both ends inclusive."""
        return a + self.randrange(b - a + 1)

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randrange(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices drawn uniformly from range(n), in draw order."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} from {n}")
        pool = list(range(n))
        self.shuffle(pool)
        return pool[:k]
