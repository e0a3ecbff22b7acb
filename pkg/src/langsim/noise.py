"""Deterministic, refinable Brownian increments.

A :class:`NoiseStream` addresses Wiener increments on a dyadic grid: level 0
covers ``base_dt``, level l covers ``base_dt / 2**l``.  Increments are pure
functions of ``(seed, salt, level, index)`` via counter-based Philox, so the
same stream can drive several runs (coupled limit experiments) and a step
can be halved mid-flight without replaying history.  Refinement uses the
Brownian bridge: the two children of a node are ``parent/2 +- Z`` with an
independent ``Z ~ N(0, h/4)``, so the sum of the halves reproduces the
parent increment exactly, bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["NoiseStream"]

_BASE_TAG = 0
_BRIDGE_TAG = 1

# All increments are snapped to this power-of-two grid.  Increment magnitudes
# stay far below 2^53 grid units, so sums and differences of increments are
# exact float operations; that is what makes dyadic refinement reproduce the
# parent increment bit for bit.  The snap perturbs each value by at most
# 2^-47, orders of magnitude below any increment standard deviation in use.
_GRID = 2.0**-46


def _snap(x: np.ndarray) -> np.ndarray:
    return np.round(x / _GRID) * _GRID


class NoiseStream:
    """Counter-addressed Gaussian increments for one batch of trajectories.

    Parameters
    ----------
    seed : int
        64-bit seed shared by every node of the stream.
    shape : tuple
        Block shape of each increment, e.g. ``(B, N, d)`` for an ensemble of
        B trajectories of N particles in d dimensions.  Trajectory b reads
        the fixed slice ``[b]`` of every block, so per-trajectory paths are
        determined by (seed, salt, b) within a fixed ensemble layout.
    base_dt : float
        Duration covered by one level-0 increment.
    salt : int
        Distinguishes independent streams drawn from the same seed.
    """

    def __init__(self, seed: int, shape, base_dt: float, salt: int = 0):
        if not (0 <= seed < 2**64):
            raise ValueError("seed must fit in 64 unsigned bits")
        if base_dt <= 0:
            raise ValueError("base_dt must be positive")
        self.seed = int(seed)
        self.salt = int(salt)
        self.shape = tuple(int(s) for s in shape)
        self.size = int(np.prod(self.shape))
        self.base_dt = float(base_dt)
        self._key = self.seed + (self.salt << 64)
        self._cache: dict = {}

    def dt(self, level: int) -> float:
        return self.base_dt / (1 << level)

    def level_for(self, dt: float) -> int:
        """Level whose spacing equals dt; dt must be a dyadic fraction."""
        ratio = self.base_dt / dt
        level = round(math.log2(ratio))
        if level < 0 or not math.isclose(ratio, 2.0**level, rel_tol=1e-12):
            raise ValueError(f"dt={dt!r} is not base_dt/2^k for base_dt={self.base_dt!r}")
        return level

    def _raw(self, tag: int, level: int, idx: int) -> np.ndarray:
        # Address words live in the high counter words; the low word is the
        # running in-block position consumed by the generator.
        bitgen = np.random.Philox(key=self._key, counter=[0, idx, level, tag])
        vals = np.random.Generator(bitgen).standard_normal(self.size)
        return vals.reshape(self.shape)

    def increment(self, level: int, idx: int) -> np.ndarray:
        """Wiener increment over [idx * h, (idx+1) * h], h = base_dt / 2^level."""
        if level < 0 or idx < 0:
            raise ValueError("level and idx must be nonnegative")
        key = (level, idx)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if level == 0:
            out = _snap(math.sqrt(self.base_dt) * self._raw(_BASE_TAG, 0, idx))
        else:
            out = self._split(level, idx)[idx & 1]
        out.flags.writeable = False
        if len(self._cache) > 4096:
            self._cache.clear()
        self._cache[key] = out
        return out

    def _split(self, level: int, idx: int):
        """Bridge the parent of node (level, idx) into its two halves.

        The left child is parent/2 plus an independent N(0, h/4) bridge
        variable, snapped to the common grid; the right child is the exact
        complement, so the halves sum to the parent bit for bit.
        """
        parent = self.increment(level - 1, idx >> 1)
        z = 0.5 * math.sqrt(self.dt(level - 1)) * self._raw(_BRIDGE_TAG, level, idx >> 1)
        left = _snap(0.5 * parent + z)
        right = parent - left
        return left, right

    def normals(self, level: int, idx: int) -> np.ndarray:
        """The increment rescaled to unit variance."""
        return self.increment(level, idx) / math.sqrt(self.dt(level))
