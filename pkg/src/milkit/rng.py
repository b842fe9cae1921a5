"""Deterministic run-level PRNG.

One run owns a single 64-bit seed; every stochastic choice (parameter init,
epoch shuffles, bag sampling, fold assignment) draws from a *named substream*
derived from that seed, so adding or reordering one consumer never perturbs
the others. Streams are xoshiro256** generators seeded through splitmix64,
matching the published reference algorithms bit for bit.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def derive_seed(seed: int, name: str) -> int:
    """Seed for the substream `name` of a run seeded with `seed`."""
    _, mixed = _splitmix64((seed ^ _fnv1a64(name.encode())) & _MASK64)
    return mixed


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** stream; state expanded from the seed via splitmix64."""

    __slots__ = ("_seed", "_s")

    def __init__(self, seed: int):
        self._seed = seed & _MASK64
        state = []
        s = self._seed
        for _ in range(4):
            s, out = _splitmix64(s)
            state.append(out)
        self._s = state

    @property
    def seed(self) -> int:
        return self._seed

    def substream(self, name: str) -> "Xoshiro256StarStar":
        """Independent stream keyed by (this stream's seed, name)."""
        return Xoshiro256StarStar(derive_seed(self._seed, name))

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection."""
        if n <= 0:
            raise ValueError(f"randrange needs n >= 1, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.randrange(hi - lo + 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items):
        if not len(items):
            raise ValueError("choice from empty sequence")
        return items[self.randrange(len(items))]
