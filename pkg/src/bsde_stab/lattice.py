"""Recombining trinomial approximation of a one-dimensional Brownian motion.

Level ``i`` carries ``2i + 1`` nodes with Brownian values ``j * delta`` for
``j = -i, ..., i``; values on a level are stored densely in a numpy array with
array index ``j + i``.  Each step moves ``+delta``, ``0`` or ``-delta`` with
probabilities 1/6, 2/3, 1/6 where ``delta = sqrt(3h)``.  The increment matches
the Gaussian moments up to order four.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

P_UP = 1.0 / 6.0
P_MID = 2.0 / 3.0
P_DOWN = 1.0 / 6.0


@dataclass(frozen=True)
class Lattice:
    horizon: float
    steps: int

    @property
    def step_size(self) -> float:
        return self.horizon / self.steps

    @property
    def increment(self) -> float:
        return math.sqrt(3.0 * self.step_size)

    @property
    def probabilities(self) -> tuple:
        return (P_UP, P_MID, P_DOWN)

    @property
    def max_abs_h(self) -> float:
        """``max |H_i| = delta / h = sqrt(3/h)``."""
        return self.increment / self.step_size

    def nodes(self, level: int) -> np.ndarray:
        """Brownian values at ``level``, ordered by offset ``j = -level..level``."""
        if not 0 <= level <= self.steps:
            raise ValueError(f"level {level} outside 0..{self.steps}")
        return np.arange(-level, level + 1) * self.increment

    def conditional_expectation(self, nxt: np.ndarray) -> np.ndarray:
        return conditional_expectation(self, nxt)

    def z_expectation(self, nxt: np.ndarray) -> np.ndarray:
        return z_expectation(self, nxt)


def build_lattice(T: float, n: int) -> Lattice:
    """Uniform trinomial lattice on ``[0, T]`` with ``n`` steps."""
    if not T > 0 or not math.isfinite(T):
        raise ValueError(f"horizon must be positive and finite, got {T}")
    if int(n) != n or n < 1:
        raise ValueError(f"step count must be a positive integer, got {n}")
    return Lattice(float(T), int(n))


def _check_next(nxt) -> np.ndarray:
    nxt = np.asarray(nxt)
    if nxt.ndim != 1 or nxt.size < 3 or nxt.size % 2 == 0:
        raise ValueError(f"level values must have odd length >= 3, got shape {nxt.shape}")
    return nxt


def conditional_expectation(lat: Lattice, nxt) -> np.ndarray:
    """One-step conditional expectation from level ``i + 1`` down to level ``i``."""
    nxt = _check_next(nxt)
    return P_UP * nxt[2:] + P_MID * nxt[1:-1] + P_DOWN * nxt[:-2]


def z_expectation(lat: Lattice, nxt) -> np.ndarray:
    """``E_i[Y_{i+1} H_i]`` with ``H_i = dW_i / h``."""
    nxt = _check_next(nxt)
    return (nxt[2:] - nxt[:-2]) * (lat.increment / (6.0 * lat.step_size))
