"""splitmix64 random stream.

Every random draw in the package (parameter init, shuffles, frame
selection, augmentation, synthetic data) goes through :class:`Rng` so a
seed reproduces the same numbers on any platform.
"""

from __future__ import annotations

import zlib

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

_G = np.uint64(GOLDEN)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, tag: str) -> int:
    """Stable child seed for a named sub-stream (e.g. one per modality)."""
    z = np.array([(seed ^ zlib.crc32(tag.encode("utf-8"))) & MASK64], dtype=np.uint64)
    return int(_mix(z + _G)[0])


class Rng:
    """Counter-style splitmix64 generator.

    Draws are vectorised: the k-th output only depends on ``seed + k*GOLDEN``
    so a block of n values is computed in one numpy expression.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def u64(self, n: int) -> np.ndarray:
        ks = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            out = _mix(np.uint64(self.state) + ks * _G)
        self.state = (self.state + n * GOLDEN) & MASK64
        return out

    def next_u64(self) -> int:
        return int(self.u64(1)[0])

    def random(self, n: int) -> np.ndarray:
        """n floats in [0, 1) with 53 bits of resolution."""
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def uniform(self, low: float, high: float, n: int | None = None):
        u = self.random(1 if n is None else n)
        x = low + (high - low) * u
        return float(x[0]) if n is None else x

    def integers(self, high: int, n: int) -> np.ndarray:
        """n integers uniform in [0, high) (multiply-floor mapping)."""
        return np.minimum((self.random(n) * high).astype(np.int64), high - 1)

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        size = int(np.prod(shape)) if np.ndim(shape) else int(shape)
        m = (size + 1) // 2
        u = self.random(2 * m)
        u1 = 1.0 - u[:m]  # (0, 1]
        u2 = u[m:]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return (z[:size] * std).reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n)."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.random(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[k] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def spawn(self, tag: str) -> "Rng":
        return Rng(derive_seed(self.state, tag))
