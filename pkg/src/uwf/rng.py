"""Seeded, counter-based pseudo-random numbers (splitmix64).

Every stochastic choice in this package (map entries, datasets, noise,
network init, power-iteration starts, shuffles) draws from this one
generator so that results are bit-reproducible across runs and platforms.

Algorithm (64-bit counter, all arithmetic mod 2^64):

    state_k = seed + k * 0x9E3779B97F4A7C15        for k = 1, 2, ...
    z = state_k
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out_k = z ^ (z >> 31)

Doubles are (out >> 11) / 2^53 in [0, 1); normals come from Box-Muller
on consecutive double pairs (u1 shifted into (0, 1]).
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix(x: np.ndarray) -> np.ndarray:
    z = x
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *indices: int) -> int:
    """Fold stream indices into a base seed (for per-sample substreams)."""
    s = np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    for ix in indices:
        s = _mix((s + _GAMMA) ^ np.uint64(ix & 0xFFFFFFFFFFFFFFFF))
    return int(s[0])


class Rng:
    """Sequential splitmix64 stream with vectorized draws."""

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._count = np.uint64(0)

    def raw(self, n: int) -> np.ndarray:
        """Next n raw 64-bit outputs."""
        ks = self._count + np.uint64(1) + np.arange(n, dtype=np.uint64)
        self._count += np.uint64(n)
        return _mix(self._seed + ks * _GAMMA)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1)."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        """n standard normal doubles via Box-Muller."""
        m = (n + 1) // 2
        u1 = ((self.raw(m) >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * 2.0**-53
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
        return out[:n]

    def complex_normal(self, n: int) -> np.ndarray:
        """n complex draws with Re, Im each N(0, 1/2), so E|z|^2 = 1."""
        x = self.normal(2 * n) * np.sqrt(0.5)
        return x[:n] + 1j * x[n:]

    def integers(self, lo: int, hi: int, n: int) -> np.ndarray:
        """n integers uniform in [lo, hi] inclusive (modulo reduction)."""
        span = np.uint64(hi - lo + 1)
        return (self.raw(n) % span).astype(np.int64) + lo

    def shuffle(self, x: np.ndarray) -> np.ndarray:
        """Fisher-Yates permutation of a copy of x."""
        out = np.array(x)
        n = len(out)
        for i in range(n - 1, 0, -1):
            j = int(self.raw(1)[0] % np.uint64(i + 1))
            out[i], out[j] = out[j], out[i]
        return out
