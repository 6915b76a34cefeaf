r"""Portable seeded random numbers.

Fixtures are generated with a 64-bit xorshift* generator so that any
language can reproduce them bit for bit from the seed:

* state initialisation: ``state = splitmix64(seed)`` (replaced by the
  constant ``0x9E3779B97F4A7C15`` if it happens to be zero),
* step: ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27`` (all mod 2**64),
* output: ``x * 0x2545F4914F6CDD1D mod 2**64``,
* uniform doubles: ``(output >> 11) * 2**-53`` in ``[0, 1)``,
* normals: Box-Muller on two consecutive uniforms ``u1, u2`` giving
  ``sqrt(-2 log(1 - u1)) * cos(2 pi u2)`` (the sine branch is discarded).
"""

from __future__ import annotations

import math
import os

import numpy as np

_MASK = (1 << 64) - 1
_MULT = 0x2545F4914F6CDD1D
SEED_ENV = "SANTALO_LAB_SEED"


def splitmix64(seed):
    z = (int(seed) + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class ShiftRegisterRNG:
    """xorshift64* generator with a small numpy-friendly interface."""

    def __init__(self, seed=0):
        state = splitmix64(seed)
        self._state = state if state else 0x9E3779B97F4A7C15

    def next_u64(self):
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self._state = x
        return (x * _MULT) & _MASK

    def random(self, size=None):
        """Uniform doubles in ``[0, 1)``."""
        if size is None:
            return (self.next_u64() >> 11) * 2.0 ** -53
        count = int(np.prod(size))
        nxt = self.next_u64
        vals = [(nxt() >> 11) for _ in range(count)]
        return (np.array(vals, dtype=np.float64) * 2.0 ** -53).reshape(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return low + (high - low) * self.random(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        count = 1 if size is None else int(np.prod(size))
        u = self.random(2 * count).reshape(count, 2)
        z = np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * math.pi * u[:, 1])
        z = loc + scale * z
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def integers(self, low, high, size=None):
        """Integers in ``[low, high)`` via ``floor(low + (high-low) * u)``."""
        u = self.random(size)
        return (low + np.floor((high - low) * np.asarray(u))).astype(np.int64)

    def unit_vectors(self, count, dim):
        """Uniform points on the unit sphere of ``R^dim`` (normalised Gaussians)."""
        g = self.normal(size=(count, dim))
        return g / np.linalg.norm(g, axis=1, keepdims=True)


def resolve_seed(seed):
    """Return the seed, overridden by the ``SANTALO_LAB_SEED`` environment variable if set."""
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return int(seed)
