"""Seedable pseudorandom generator used everywhere randomness is needed.

The generator is xoshiro256** (Blackman/Vigna), a 64-bit xorshift-family
algorithm, seeded through SplitMix64. All derived quantities are pinned so
that two independent implementations can reproduce byte-identical streams:

* raw stream: xoshiro256** with state ``s[0..3]`` initialized from four
  successive SplitMix64 outputs of the seed
* uniform double in [0, 1): ``(next() >> 11) * 2**-53``
* gaussian pairs via Box-Muller: ``u1 = ((next() >> 11) + 1) * 2**-53`` in
  (0, 1], ``u2`` uniform in [0, 1); ``z0 = sqrt(-2 ln u1) cos(2 pi u2)`` is
  returned first and ``z1 = sqrt(-2 ln u1) sin(2 pi u2)`` is cached
* bounded integer: ``next() % n``
* shuffle: Fisher-Yates from the top index down, picking ``below(i + 1)``
* substream ``i`` of master seed ``m``: a fresh generator seeded with
  ``splitmix_scramble(m + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)``, i.e.
  the (i+1)-th SplitMix64 output of ``m``, addressable in O(1)

Only the stdlib and math are used so the module can ship inside servable
archives unchanged.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix_scramble(z: int) -> int:
    """Output stage of SplitMix64 applied to a pre-advanced state word."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix_stream(seed: int, count: int) -> list[int]:
    """First `count` outputs of SplitMix64 seeded with `seed`."""
    return [splitmix_scramble(seed + (i + 1) * _GOLDEN) for i in range(count)]


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256StarStar:
    """xoshiro256** stream; seed is any 64-bit integer."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        s = splitmix_stream(self.seed, 4)
        # All-zero state is unreachable from SplitMix64 expansion, but guard
        # anyway: xoshiro256** must never be seeded with four zero words.
        if not any(s):
            s[0] = _GOLDEN
        self._s = s
        self._spare_gaussian: float | None = None

    @classmethod
    def substream(cls, master_seed: int, index: int) -> "Xoshiro256StarStar":
        """Independent stream `index` derived from `master_seed` (O(1))."""
        return cls(splitmix_scramble(master_seed + (index + 1) * _GOLDEN))

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def gaussian(self) -> float:
        """Standard normal via Box-Muller; the sine mate is cached."""
        if self._spare_gaussian is not None:
            z = self._spare_gaussian
            self._spare_gaussian = None
            return z
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_gaussian = r * math.sin(theta)
        return r * math.cos(theta)

    def below(self, n: int) -> int:
        """Integer in [0, n); modulo reduction, documented and deterministic."""
        if n <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates from the top index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def uniforms(self, count: int) -> list[float]:
        return [self.uniform() for _ in range(count)]

    def gaussians(self, count: int) -> list[float]:
        return [self.gaussian() for _ in range(count)]
