"""Counter-based pseudo-random streams with cross-platform reproducibility.

Each stream is keyed by (seed, stream_id) and produces a sequence that
depends only on the draw index, never on shared global state.  The
generator is the splitmix64 output function applied to a per-stream key
advanced by the 64-bit golden-ratio increment:

    key    = mix(mix(seed) xor mix((stream_id + 1) * 0xD2B74407B1CE6E93))
    out_i  = mix(key + i * 0x9E3779B97F4A7C15)   for i = 1, 2, ...

where mix is the splitmix64 finalizer.  All arithmetic is modulo 2**64,
so identical (seed, stream_id, i) gives identical output on every
platform and language.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STREAM_SALT = 0xD2B74407B1CE6E93


def _mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class RandomStream:
    """Deterministic uniform stream for one consumer (MAC backoff, jitter...)."""

    __slots__ = ("seed", "stream_id", "_key", "_count")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = seed & _MASK
        self.stream_id = stream_id
        self._key = _mix64(_mix64(self.seed) ^ _mix64(((stream_id + 1) * _STREAM_SALT) & _MASK))
        self._count = 0

    def next_u64(self) -> int:
        self._count += 1
        return _mix64((self._key + self._count * _GOLDEN) & _MASK)

    def uniform(self) -> float:
        """Uniform float in [0, 1)."""
        return self.next_u64() / 2.0**64

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n).  Modulo bias is negligible for n << 2**64."""
        if n <= 0:
            raise ValueError("randrange needs n > 0")
        return self.next_u64() % n
