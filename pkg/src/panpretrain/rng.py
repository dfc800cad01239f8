"""Deterministic, splittable random streams built on SplitMix64.

Every random decision in the package (spectral mixing, PAN weights,
augmentation and degradation parameters, noise fields, weight init, batch
order) is drawn from an :class:`RngStream`.  No OS entropy is used anywhere,
so a global seed fully determines every artifact.

Generator::

    state <- state + 0x9E3779B97F4A7C15              (mod 2**64)
    out    = finalize(state)

    finalize(z):
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
        return z ^ (z >> 31)

Because the state advances by a constant, the n-th output is a pure function
of ``state + n * GAMMA``; the array methods exploit this to produce exactly the
same values as repeated scalar calls.

Derivation: ``child_seed = finalize(parent.state ^ ((label + index) mod 2**64))``.
The parent is not advanced by :meth:`RngStream.derive`.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidRange

MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)

# Purpose labels for derived streams.  Arbitrary odd 64-bit constants; changing
# any of them changes every generated artifact.
LABEL_SAMPLE = 0x53414D504C450001
LABEL_MIX = 0x4D49580000000003
LABEL_PAN = 0x50414E0000000005
LABEL_AUGMENT = 0x4155474D00000007
LABEL_DEGRADE_MS = 0x444547524D530009
LABEL_DEGRADE_PAN = 0x44454752504E000B
LABEL_NOISE = 0x4E4F49534500000D
LABEL_INIT = 0x494E49540000000F
LABEL_SHUFFLE = 0x5348554646000011
LABEL_SCRATCH = 0x5343524154000013
LABEL_BENCH = 0x42454E4348000015
LABEL_SENSOR = 0x53454E534F520017


def finalize(z: int) -> int:
    """SplitMix64 output mix (also used as the seed-derivation hash)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _finalize_array(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64, which is what we want
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class RngStream:
    """A SplitMix64 stream.  Cheap to copy; never share one across workers."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def __repr__(self) -> str:
        return f"RngStream(state=0x{self.state:016x})"

    def __eq__(self, other) -> bool:
        return isinstance(other, RngStream) and other.state == self.state

    def copy(self) -> "RngStream":
        return RngStream(self.state)

    def derive(self, label: int, index: int = 0) -> "RngStream":
        return RngStream(finalize(self.state ^ ((label + index) & MASK64)))

    # -- scalar draws -----------------------------------------------------

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return finalize(self.state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of resolution."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        if lo > hi:
            raise InvalidRange(f"uniform range [{lo}, {hi}] is empty")
        if lo == hi:
            self.next_u64()
            return lo
        return lo + (hi - lo) * self.random()

    def normal(self, mean: float = 0.0, sd: float = 1.0) -> float:
        # Box-Muller, cosine branch only: every normal costs exactly two draws
        u1 = 1.0 - self.random()
        u2 = self.random()
        return mean + sd * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def choice(self, n: int) -> int:
        if n < 1:
            raise InvalidRange("choice() needs n >= 1")
        return min(int(self.random() * n), n - 1)

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.choice(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    # -- bulk draws (bit-identical to the scalar sequence) ---------------

    def u64_array(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GAMMA)
        states = steps + np.uint64(self.state)
        self.state = (self.state + n * GAMMA) & MASK64
        return _finalize_array(states)

    def random_array(self, n: int) -> np.ndarray:
        return (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def uniform_array(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        if lo > hi:
            raise InvalidRange(f"uniform range [{lo}, {hi}] is empty")
        return lo + (hi - lo) * self.random_array(n)

    def normal_array(self, n: int, mean: float = 0.0, sd: float = 1.0) -> np.ndarray:
        u = self.random_array(2 * n)
        u1 = 1.0 - u[0::2]
        u2 = u[1::2]
        return mean + sd * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
