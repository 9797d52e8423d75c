"""BSDE generators ``f(y, z)`` together with their declared regularity constants.

Drivers are evaluated on numpy arrays (node values of one lattice level), so
``evaluate`` must be written with numpy ufuncs.  The constants are declared,
never estimated: the stability criteria are functions of these numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional

import numpy as np

DRIVER_FAMILIES = ("linear", "abs_z", "atan_z")


@dataclass(frozen=True)
class Driver:
    """A time-independent deterministic generator and its constants.

    Attributes
    ----------
    evaluate : callable
        ``evaluate(y, z)`` returning ``f(y, z)``; must broadcast over arrays.
    lipschitz_y : float or None
        Lipschitz constant in ``y``.  ``None`` means not Lipschitz (monotone-only
        drivers such as ``-y**3``), which rules out the pseudo-explicit scheme.
    lipschitz_z : float
        Lipschitz constant in ``z``.
    monotonicity_y : float
        ``l^Y`` in ``(y - y')(f(y, z) - f(y', z)) <= -l^Y (y - y')**2``.
    label : str
        Name used in reports.
    linear : tuple of float, optional
        ``(a, b)`` when ``f(y, z) = a*y + b*z``; enables closed-form implicit steps.
    """

    evaluate: Callable
    lipschitz_y: Optional[float]
    lipschitz_z: float
    monotonicity_y: float = 0.0
    label: str = "custom"
    linear: Optional[tuple] = None

    def __post_init__(self):
        if self.lipschitz_z < 0 or self.monotonicity_y < 0:
            raise ValueError("driver constants must be nonnegative")
        if self.lipschitz_y is not None:
            if self.lipschitz_y < 0:
                raise ValueError("driver constants must be nonnegative")
            if self.monotonicity_y > self.lipschitz_y:
                raise ValueError("monotonicity constant l^Y cannot exceed L^Y")

    def __call__(self, y, z):
        return self.evaluate(y, z)

    @property
    def y_free(self) -> bool:
        """True when ``f`` is declared independent of ``y`` (``L^Y = 0``)."""
        return self.lipschitz_y == 0


def _linear(a, b, y, z):
    return a * y + b * z


def _abs_z(b, y, z):
    return b * np.abs(z)


def _atan_z(b, y, z):
    return np.arctan(b * z)


def linear_driver(a: float, b: float) -> Driver:
    """``f(y, z) = a*y + b*z`` with ``a <= 0``."""
    if a > 0:
        raise ValueError(f"linear driver needs a <= 0, got a={a}")
    a, b = float(a), float(b)
    return Driver(
        evaluate=partial(_linear, a, b),
        lipschitz_y=abs(a),
        lipschitz_z=abs(b),
        monotonicity_y=-a,
        label=f"linear(a={a:g}, b={b:g})",
        linear=(a, b),
    )


def abs_z_driver(b: float) -> Driver:
    """``f(y, z) = b*|z|``."""
    b = float(b)
    return Driver(partial(_abs_z, b), 0.0, abs(b), 0.0, f"abs_z(b={b:g})")


def atan_z_driver(b: float) -> Driver:
    """``f(y, z) = arctan(b*z)``."""
    b = float(b)
    return Driver(partial(_atan_z, b), 0.0, abs(b), 0.0, f"atan_z(b={b:g})")


def make_driver(family: str, a: float = 0.0, b: float = 0.0) -> Driver:
    """Build a built-in driver by name (``linear``, ``abs_z`` or ``atan_z``)."""
    if family == "linear":
        return linear_driver(a, b)
    if family == "abs_z":
        return abs_z_driver(b)
    if family == "atan_z":
        return atan_z_driver(b)
    raise ValueError(f"unknown driver family {family!r}; expected one of {DRIVER_FAMILIES}")


def constant_violations(drv: Driver, samples: int = 10_000, box: float = 10.0,
                        seed: int = 0) -> dict:
    """Largest excess over each declared regularity inequality on random points.

    Draws ``samples`` tuples ``(y, y', z, z')`` uniformly in ``[-box, box]**4``.
    A value ``<= tol`` for every key means the constants are consistent with
    the sampled points.  ``lipschitz_y`` is absent when ``L^Y`` is undeclared.
    """
    rng = np.random.default_rng(seed)
    y, y2, z, z2 = rng.uniform(-box, box, size=(4, samples))
    dy = drv.evaluate(y, z) - drv.evaluate(y2, z)
    out = {
        "monotonicity_y": float(np.max((y - y2) * dy + drv.monotonicity_y * (y - y2) ** 2)),
        "lipschitz_z": float(np.max(np.abs(drv.evaluate(y, z) - drv.evaluate(y, z2))
                                    - drv.lipschitz_z * np.abs(z - z2))),
    }
    if drv.lipschitz_y is not None:
        out["lipschitz_y"] = float(np.max(np.abs(dy) - drv.lipschitz_y * np.abs(y - y2)))
    return out


def check_constants(drv: Driver, samples: int = 10_000, tol: float = 1e-12,
                    seed: int = 0) -> bool:
    """True if every sampled regularity inequality holds within ``tol``."""
    return all(v <= tol for v in constant_violations(drv, samples, seed=seed).values())
