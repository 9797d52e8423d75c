"""Backward theta-scheme on the trinomial lattice.

Per level, ``Z_i`` is taken from ``Y_{i+1}`` first and only ``Y_i`` is ever
implicit.  ``theta=0`` evaluates the driver at the children's ``Y_{i+1}`` with
the parent's ``Z_i``; ``theta=1`` solves ``y - h f(y, Z_i) = E_i[Y_{i+1}]`` at
every node.

Instability is what this code is for, so growth never aborts a solve: the first
non-finite level sets ``SchemeResult.diverged`` and the recursion stops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .driver import Driver
from .errors import ImplicitSolveFailure
from .lattice import P_DOWN, P_MID, P_UP, Lattice

BRACKET_DOUBLINGS = 60
_BISECTION_MAX = 4000


@dataclass(frozen=True)
class SchemeConfig:
    theta: int = 1
    fixed_point_tolerance: float = 1e-12
    fixed_point_max_iterations: int = 100
    cap: float = 10.0

    def __post_init__(self):
        if self.theta not in (0, 1):
            raise ValueError(f"theta must be 0 or 1, got {self.theta}")
        if not self.fixed_point_tolerance > 0:
            raise ValueError("fixed_point_tolerance must be positive")
        if self.fixed_point_max_iterations < 1:
            raise ValueError("fixed_point_max_iterations must be positive")
        if not self.cap > 0:
            raise ValueError("cap must be positive")


@dataclass
class SchemeResult:
    y0: float
    z0: float
    diverged: bool
    max_abs_y: float
    y_levels: Optional[list] = field(default=None, repr=False)

    def capped(self, cap: float = 10.0) -> float:
        """``|Y_0| ^ cap``, with ``cap`` for diverged solves."""
        if self.diverged or not math.isfinite(self.y0):
            return float(cap)
        return min(abs(self.y0), float(cap))


def _picard(rhs, z, drv, h, cfg):
    y = rhs.copy()
    done = np.zeros(rhs.shape, dtype=bool)
    for _ in range(cfg.fixed_point_max_iterations):
        y_new = rhs + h * drv.evaluate(y, z)
        step = np.abs(y_new - y)
        y = np.where(done, y, y_new)
        done |= step <= cfg.fixed_point_tolerance * np.maximum(np.abs(y_new), 1.0)
        if done.all():
            break
    return y, done


def _bracket_solve(rhs, z, drv, h, cfg):
    # G(y) = y - h f(y, z) - rhs is strictly increasing under the well-posedness
    # conditions, so a sign change brackets the unique root.
    def G(y):
        return y - h * drv.evaluate(y, z) - rhs

    width = np.maximum(np.abs(rhs), 1.0)
    lo, hi = rhs - width, rhs + width
    for _ in range(BRACKET_DOUBLINGS):
        g_lo, g_hi = G(lo), G(hi)
        bad_lo, bad_hi = g_lo > 0, g_hi < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        width = np.where(bad_lo | bad_hi, 2.0 * width, width)
        lo = np.where(bad_lo, rhs - width, lo)
        hi = np.where(bad_hi, rhs + width, hi)
    else:
        g_lo, g_hi = G(lo), G(hi)
        if (g_lo > 0).any() or (g_hi < 0).any():
            raise ImplicitSolveFailure(
                f"no sign change of y - h f(y, z) - rhs after {BRACKET_DOUBLINGS} doublings")
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
        raise ImplicitSolveFailure("implicit bracket overflowed")

    tol = cfg.fixed_point_tolerance
    for _ in range(_BISECTION_MAX):
        mid = 0.5 * (lo + hi)
        at_resolution = (mid == lo) | (mid == hi)
        g_mid = G(mid)
        lo = np.where(g_mid <= 0, mid, lo)
        hi = np.where(g_mid <= 0, hi, mid)
        width = hi - lo
        if np.all((width <= tol * np.maximum(np.abs(mid), 1.0)) | at_resolution):
            return 0.5 * (lo + hi)
    raise ImplicitSolveFailure("bisection did not reach tolerance")


def implicit_solve(rhs, z, drv: Driver, h: float, cfg: SchemeConfig) -> np.ndarray:
    """Vectorised solve of ``y - h f(y, z) = rhs`` at every node.

    Solver ladder: closed form for linear drivers, one substitution for
    ``y``-free drivers, Picard iteration when ``h L^Y < 1``, safeguarded
    bracketing plus bisection otherwise (or when Picard stalls).
    """
    rhs = np.asarray(rhs, dtype=float)
    z = np.asarray(z, dtype=float)
    if drv.linear is not None:
        a, b = drv.linear
        return (rhs + h * (b * z)) / (1.0 - a * h)
    if drv.y_free:
        return rhs + h * drv.evaluate(rhs, z)
    if drv.lipschitz_y is not None and h * drv.lipschitz_y < 1.0:
        y, done = _picard(rhs, z, drv, h, cfg)
        if done.all():
            return y
        y = y.copy()
        y[~done] = _bracket_solve(rhs[~done], z[~done], drv, h, cfg)
        return y
    return _bracket_solve(rhs, z, drv, h, cfg)


def implicit_step(rhs: float, z: float, drv: Driver, h: float,
                  cfg: SchemeConfig = SchemeConfig()) -> float:
    """The unique ``y`` with ``y - h f(y, z) = rhs``."""
    if not h > 0:
        raise ValueError("h must be positive")
    return float(implicit_solve(np.array([rhs]), np.array([z]), drv, h, cfg)[0])


def _explicit_step(y_next, ey, z, drv, h):
    if drv.linear is not None:
        a, b = drv.linear
        return ey + h * (a * ey + b * z)
    if drv.y_free:
        return ey + h * drv.evaluate(ey, z)
    f_mean = (P_UP * drv.evaluate(y_next[2:], z)
              + P_MID * drv.evaluate(y_next[1:-1], z)
              + P_DOWN * drv.evaluate(y_next[:-2], z))
    return ey + h * f_mean


def _check_well_posed(drv: Driver, theta: int):
    if not math.isfinite(drv.lipschitz_z):
        raise ValueError("driver needs a finite Lipschitz-z constant")
    if theta == 0 and (drv.lipschitz_y is None or not math.isfinite(drv.lipschitz_y)):
        raise ValueError("the pseudo-explicit scheme needs a finite Lipschitz-y constant")


def solve_backward(lat: Lattice, drv: Driver, cfg: SchemeConfig,
                   terminal: Callable, keep_levels: bool = False) -> SchemeResult:
    """Run the theta-scheme from ``Y_n = terminal(W_T)`` down to level 0.

    ``terminal`` maps an array of Brownian node values to terminal data.
    With ``keep_levels`` the result carries every level, index ``i`` being
    level ``i``; on divergence only the computed levels are kept.
    """
    _check_well_posed(drv, cfg.theta)
    h = lat.step_size
    n = lat.steps
    y = np.asarray(terminal(lat.nodes(n)), dtype=float) * np.ones(2 * n + 1)
    levels = [y] if keep_levels else None
    nan = float("nan")

    if not np.isfinite(y).all():
        return SchemeResult(nan, nan, True, nan, levels)
    max_abs = float(np.max(np.abs(y)))
    z = np.zeros(1)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n - 1, -1, -1):
            z = lat.z_expectation(y)
            ey = lat.conditional_expectation(y)
            if not (np.isfinite(ey).all() and np.isfinite(z).all()):
                return _diverged(max_abs, levels)
            if cfg.theta == 1:
                y = implicit_solve(ey, z, drv, h, cfg)
            else:
                y = _explicit_step(y, ey, z, drv, h)
            if not np.isfinite(y).all():
                return _diverged(max_abs, levels)
            max_abs = max(max_abs, float(np.max(np.abs(y))))
            if keep_levels:
                levels.append(y)
    if keep_levels:
        levels.reverse()
    return SchemeResult(float(y[0]), float(z[0]), False, max_abs, levels)


def _diverged(max_abs, levels):
    if levels is not None:
        levels.reverse()
    nan = float("nan")
    return SchemeResult(nan, nan, True, max_abs, levels)
