"""Analytic stability criteria for the Euler schemes.

Two families live here:

* sufficient conditions for numerical stability, stated on the driver
  constants (multidimensional and one-dimensional versions);
* Von Neumann (VN) criteria for linear drivers ``f(y, z) = a*y + b.z`` under
  Gaussian increments, their stability regions in ``h``, the critical tangency
  constants of the implicit scheme, and a brute-force sup-over-frequency oracle.

With ``p = -a/B`` and ``u = B*h``, where ``B`` is the squared effective
gradient norm, the implicit criterion reads ``psi(p, u) >= 0`` with
``psi(p, u) = (1 + p*u)**2 - u*exp(1/u - 1)``.

The effective norm defaults to the Euclidean ``|b|``: for frequencies
``k`` of either sign, ``sup (b.k)**2 / |k|**2 = |b|**2``.  ``norm="inf"``
selects ``b_inf_norm`` instead; both agree when ``d = 1`` or all ``b_l``
share a sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import RootBracketFailure

ORACLE_SLACK = 1e-9
NORMS = ("euclidean", "inf")


# ---------------------------------------------------------------------------
# sufficient conditions


@dataclass(frozen=True)
class StabilityInputs:
    """Constants entering the sufficient conditions.

    ``lipschitz_y`` may be ``None`` for the implicit scheme (monotone,
    non-Lipschitz drivers).  ``lam`` is the lower H-moment bound; no criterion
    uses it.
    """

    theta: int
    h: float
    lipschitz_z: float
    monotonicity_y: float
    lipschitz_y: Optional[float] = None
    Lambda: float = 1.0
    max_abs_h: float = math.inf
    lam: float = 1.0

    def __post_init__(self):
        if self.theta not in (0, 1):
            raise ValueError(f"theta must be 0 or 1, got {self.theta}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.Lambda > 0:
            raise ValueError("Lambda must be positive")
        consts = [self.lipschitz_z, self.monotonicity_y, self.max_abs_h]
        if self.lipschitz_y is not None:
            consts.append(self.lipschitz_y)
        if any(c < 0 for c in consts):
            raise ValueError("constants must be nonnegative")


def _y_term_needed(inp: StabilityInputs) -> bool:
    return inp.theta == 0 and inp.lipschitz_y != 0


def sufficient_multidim_lhs(inp: StabilityInputs) -> float:
    """``(sqrt(Lambda) L^Z + sqrt(h) L^Y (1 - theta))**2 / (2 l^Y)``."""
    if not inp.monotonicity_y > 0:
        raise ValueError("the multidimensional condition needs l^Y > 0")
    ly = 0.0
    if inp.theta == 0:
        if inp.lipschitz_y is None or not math.isfinite(inp.lipschitz_y):
            raise ValueError("the pseudo-explicit scheme needs a finite L^Y")
        ly = inp.lipschitz_y
    s = math.sqrt(inp.Lambda) * inp.lipschitz_z + math.sqrt(inp.h) * ly * (1 - inp.theta)
    return s * s / (2.0 * inp.monotonicity_y)


def sufficient_multidim(inp: StabilityInputs) -> bool:
    return sufficient_multidim_lhs(inp) <= 1.0


def sufficient_unidim_lhs(inp: StabilityInputs) -> float:
    """``h [(1 - theta)**2 (L^Y)**2 / (2 l^Y) + L^Z max|H|]``."""
    if not math.isfinite(inp.max_abs_h):
        raise ValueError("the one-dimensional condition needs bounded H-coefficients")
    y_term = 0.0
    if _y_term_needed(inp):
        if not inp.monotonicity_y > 0:
            raise ValueError("the pseudo-explicit one-dimensional condition needs l^Y > 0")
        if inp.lipschitz_y is None or not math.isfinite(inp.lipschitz_y):
            raise ValueError("the pseudo-explicit scheme needs a finite L^Y")
        y_term = inp.lipschitz_y ** 2 / (2.0 * inp.monotonicity_y)
    return inp.h * (y_term + inp.lipschitz_z * inp.max_abs_h)


def sufficient_unidim(inp: StabilityInputs) -> bool:
    return sufficient_unidim_lhs(inp) <= 1.0


def stability_inputs_for(drv, theta: int, h: float, Lambda: float = 1.0,
                         max_abs_h: float = math.inf) -> StabilityInputs:
    """Collect the constants declared on a driver."""
    return StabilityInputs(theta=theta, h=h, lipschitz_z=drv.lipschitz_z,
                           monotonicity_y=drv.monotonicity_y,
                           lipschitz_y=drv.lipschitz_y, Lambda=Lambda,
                           max_abs_h=max_abs_h)


# ---------------------------------------------------------------------------
# Von Neumann analysis for linear drivers


@dataclass(frozen=True)
class LinearVnInputs:
    a: float
    b: tuple
    h: float

    def __post_init__(self):
        b = tuple(float(x) for x in np.atleast_1d(self.b))
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "h", float(self.h))
        if self.a > 0:
            raise ValueError(f"a must be <= 0, got {self.a}")
        if len(b) < 1:
            raise ValueError("b must have dimension >= 1")
        if not self.h > 0:
            raise ValueError("h must be positive")


def b_inf_norm(b: Sequence[float]) -> float:
    """``max(|b+|, |b-|)``: larger Euclidean norm of the positive/negative parts."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if b.size < 1:
        raise ValueError("b must have dimension >= 1")
    return float(max(np.linalg.norm(np.maximum(b, 0.0)),
                     np.linalg.norm(np.minimum(b, 0.0))))


def effective_b_norm(b: Sequence[float], norm: str = "euclidean") -> float:
    if norm == "euclidean":
        return float(np.linalg.norm(np.atleast_1d(np.asarray(b, dtype=float))))
    if norm == "inf":
        return b_inf_norm(b)
    raise ValueError(f"norm must be one of {NORMS}, got {norm!r}")


def _is_zero(b) -> bool:
    return not np.any(np.asarray(b) != 0)


def vn_stable_implicit(inp: LinearVnInputs, norm: str = "euclidean") -> bool:
    """VN stability of the implicit scheme (``theta = 1``)."""
    if _is_zero(inp.b):
        return True
    bh = effective_b_norm(inp.b, norm) ** 2 * inp.h
    if bh <= 1.0:
        return True
    return (1.0 - inp.a * inp.h) ** 2 - bh * math.exp(1.0 / bh - 1.0) >= 0.0


def _h_below_two_over_a(a: float, h: float) -> bool:
    # a = 0 reads h <= -2/a as always true
    return a == 0.0 or h <= -2.0 / a


def vn_stable_explicit(inp: LinearVnInputs, norm: str = "euclidean") -> bool:
    """VN stability of the pseudo-explicit scheme (``theta = 0``)."""
    a, h = inp.a, inp.h
    if _is_zero(inp.b):
        return _h_below_two_over_a(a, h)
    bh = effective_b_norm(inp.b, norm) ** 2 * h
    c = (1.0 + a * h) ** 2
    if bh <= c:
        return _h_below_two_over_a(a, h)
    return 1.0 - bh * math.exp(c / bh - 1.0) >= 0.0


def vn_stable(inp: LinearVnInputs, theta: int, norm: str = "euclidean") -> bool:
    if theta == 1:
        return vn_stable_implicit(inp, norm)
    if theta == 0:
        return vn_stable_explicit(inp, norm)
    raise ValueError(f"theta must be 0 or 1, got {theta}")


def vn_margin(inp: LinearVnInputs, theta: int, norm: str = "euclidean") -> float:
    """Signed distance to the VN boundary: ``inf`` of the proofs' ``phi``.

    Nonnegative exactly when the scheme is VN stable.  For ``theta = 1`` this
    is ``(1 - a h)**2 (1 - sup|lambda|**2)``, for ``theta = 0`` it is
    ``1 - sup|lambda|**2``.
    """
    a, h = inp.a, inp.h
    bh = effective_b_norm(inp.b, norm) ** 2 * h
    if theta == 1:
        peak = bh * math.exp(1.0 / bh - 1.0) if bh > 1.0 else 1.0
        return (1.0 - a * h) ** 2 - peak
    if theta == 0:
        c = (1.0 + a * h) ** 2
        peak = bh * math.exp(c / bh - 1.0) if bh > c else c
        return 1.0 - peak
    raise ValueError(f"theta must be 0 or 1, got {theta}")


def amplification_factor(inp: LinearVnInputs, theta: int, k) -> complex:
    """Per-step factor ``lambda(k)`` for terminal data ``exp(i k.W_T)``.

    ``k`` may carry extra leading axes (shape ``(..., d)``); the result then has
    shape ``k.shape[:-1]``.
    """
    k = np.asarray(k, dtype=float)
    b = np.asarray(inp.b)
    if k.shape[-1:] != b.shape:
        raise ValueError(f"k has dimension {k.shape[-1:]} but b has {b.shape}")
    h, a = inp.h, inp.a
    bk = k @ b
    damp = np.exp(-0.5 * h * np.sum(k * k, axis=-1))
    if theta == 1:
        lam = (1.0 + 1j * h * bk) * damp / (1.0 - a * h)
    elif theta == 0:
        lam = (1.0 + a * h + 1j * h * bk) * damp
    else:
        raise ValueError(f"theta must be 0 or 1, got {theta}")
    return complex(lam) if np.ndim(lam) == 0 else lam


def amplification_modulus_sq(inp: LinearVnInputs, theta: int, bk, ksq):
    """``|lambda|**2`` from ``bk = b.k`` and ``ksq = |k|**2`` (arrays broadcast)."""
    h, a = inp.h, inp.a
    damp = np.exp(-h * ksq)
    if theta == 1:
        return (1.0 + h * h * bk * bk) * damp / (1.0 - a * h) ** 2
    if theta == 0:
        return ((1.0 + a * h) ** 2 + h * h * bk * bk) * damp
    raise ValueError(f"theta must be 0 or 1, got {theta}")


def oracle_axis(points: int = 400) -> np.ndarray:
    """Symmetric frequency axis ``{0} U +-[1e-3, 1e3]`` with ``points`` per sign."""
    pos = np.logspace(-3.0, 3.0, points)
    return np.concatenate([-pos[::-1], [0.0], pos])


# a full 801**3 grid is out of reach; three dimensions use a coarser axis
_ORACLE_POINTS = {1: 400, 2: 400, 3: 40}


def vn_oracle_sup(inp: LinearVnInputs, theta: int, refine: bool = True) -> float:
    """``sup_k |lambda(k)|**2`` by grid search plus local polishing.

    The tensor grid uses ``oracle_axis`` on every coordinate (400 points per
    sign for ``d <= 2``, 40 for ``d = 3``).  The best grid point is then
    polished with Nelder-Mead so that near-boundary cases resolve below the
    grid spacing.
    """
    from scipy.optimize import minimize

    d = len(inp.b)
    if d > 3:
        raise ValueError("the oracle is limited to d <= 3")
    axis = oracle_axis(_ORACLE_POINTS[d])
    h, a = inp.h, inp.a
    # exp(-h|k|^2) factorises over coordinates
    bk = 0.0
    damp = 1.0
    axis_damp = np.exp(-h * axis * axis)
    for ell, b_ell in enumerate(inp.b):
        shape = [1] * d
        shape[ell] = axis.size
        bk = bk + b_ell * axis.reshape(shape)
        damp = damp * axis_damp.reshape(shape)
    if theta == 1:
        vals = (1.0 + (h * bk) ** 2) * damp * (1.0 / (1.0 - a * h) ** 2)
    elif theta == 0:
        vals = ((1.0 + a * h) ** 2 + (h * bk) ** 2) * damp
    else:
        raise ValueError(f"theta must be 0 or 1, got {theta}")
    vals = vals.ravel()
    best = float(vals.max())
    if not refine:
        return best

    b = np.asarray(inp.b)

    def neg(x):
        return -float(amplification_modulus_sq(inp, theta, x @ b, x @ x))

    x0 = axis[np.array(np.unravel_index(int(np.argmax(vals)), (axis.size,) * d))]
    res = minimize(neg, x0, method="Nelder-Mead",
                   options={"xatol": 1e-8, "fatol": 1e-14, "maxfev": 1500})
    # the polished point is re-scored through the complex factor itself
    best = max(best, abs(amplification_factor(inp, theta, res.x)) ** 2)
    return best


def vn_oracle(inp: LinearVnInputs, theta: int) -> bool:
    """Direct check ``sup_k |lambda(k)| <= 1`` (with ``1e-9`` slack on the square)."""
    return vn_oracle_sup(inp, theta) <= 1.0 + ORACLE_SLACK


# ---------------------------------------------------------------------------
# stability regions


class RegionKind(Enum):
    A_STABLE = "A_STABLE"
    FORBIDDEN_INTERVAL = "FORBIDDEN_INTERVAL"
    STABLE_PREFIX = "STABLE_PREFIX"


@dataclass(frozen=True)
class VnRegion:
    """Set of step sizes ``h > 0`` for which a scheme is VN stable.

    ``FORBIDDEN_INTERVAL`` is stable iff ``h`` is outside the open interval
    ``(h_low, h_high)``; ``STABLE_PREFIX`` is stable iff ``h <= h_bar``.
    """

    kind: RegionKind
    h_low: Optional[float] = None
    h_high: Optional[float] = None
    h_bar: Optional[float] = None

    def __post_init__(self):
        if self.kind is RegionKind.FORBIDDEN_INTERVAL:
            if not (self.h_low is not None and self.h_high is not None
                    and self.h_low < self.h_high):
                raise ValueError("forbidden interval needs h_low < h_high")
        if self.kind is RegionKind.STABLE_PREFIX:
            if not (self.h_bar is not None and self.h_bar > 0):
                raise ValueError("stable prefix needs h_bar > 0")

    def contains(self, h: float) -> bool:
        if self.kind is RegionKind.A_STABLE:
            return True
        if self.kind is RegionKind.FORBIDDEN_INTERVAL:
            return not (self.h_low < h < self.h_high)
        return h <= self.h_bar


def _bisect(f, lo: float, hi: float, rtol: float = 1e-14, max_iter: int = 400) -> float:
    """Root of ``f`` on ``[lo, hi]`` given a sign change; plain bisection."""
    f_lo = f(lo)
    if f_lo == 0:
        return lo
    f_hi = f(hi)
    if f_hi == 0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise RootBracketFailure(f"no sign change on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo <= rtol * abs(mid):
            return mid
        f_mid = f(mid)
        if f_mid == 0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _expand_upper(f, start: float, max_doublings: int = 200) -> float:
    """Double ``start`` until ``f`` becomes positive."""
    u = start
    for _ in range(max_doublings):
        u *= 2.0
        if f(u) > 0:
            return u
    raise RootBracketFailure(f"no sign change after {max_doublings} doublings")


def psi(p: float, u: float) -> float:
    """``(1 + p u)**2 - u exp(1/u - 1)``; the implicit criterion is ``psi >= 0``."""
    return (1.0 + p * u) ** 2 - u * math.exp(1.0 / u - 1.0)


def dpsi_du(p: float, u: float) -> float:
    return 2.0 * p * (1.0 + p * u) - math.exp(1.0 / u - 1.0) * (1.0 - 1.0 / u)


def _psi_min_location(p: float) -> float:
    """Location of ``min psi(p, .)`` over ``u >= 1``.

    ``psi`` is concave then convex in ``u`` (its second derivative
    ``2p**2 - exp(1/u - 1)/u**3`` changes sign once), so the interior
    minimum is the root of ``dpsi_du`` beyond the inflection point.
    """
    if 2.0 * p * p >= 1.0:
        return 1.0
    u_c = _bisect(lambda u: 2.0 * p * p - math.exp(1.0 / u - 1.0) / u ** 3,
                  1.0, _expand_upper(lambda u: 2.0 * p * p - math.exp(1.0 / u - 1.0) / u ** 3, 1.0))
    if dpsi_du(p, u_c) >= 0:
        return 1.0
    hi = _expand_upper(lambda u: dpsi_du(p, u), u_c)
    u_star = _bisect(lambda u: dpsi_du(p, u), u_c, hi)
    return u_star if psi(p, u_star) < psi(p, 1.0) else 1.0


@lru_cache(maxsize=None)
def critical_constants() -> tuple:
    """Tangency point ``(p_tilde, u_tilde)`` of ``psi``.

    The implicit scheme is VN A-stable iff ``-a/B >= p_tilde``.  Found by nested
    bisection: the outer search on ``p`` zeroes ``min_u psi(p, u)``, the inner
    one locates that minimum through ``dpsi_du = 0``.
    """
    def min_psi(p):
        return psi(p, _psi_min_location(p))

    p_t = _bisect(min_psi, 0.01, 0.5)
    return p_t, _psi_min_location(p_t)


def implicit_region(a: float, b, norm: str = "euclidean") -> VnRegion:
    """VN stability region of the implicit scheme in ``h``."""
    if a > 0:
        raise ValueError(f"a must be <= 0, got {a}")
    B = effective_b_norm(b, norm) ** 2
    if B == 0:
        return VnRegion(RegionKind.A_STABLE)
    p = -a / B
    if p == 0:
        return VnRegion(RegionKind.FORBIDDEN_INTERVAL, 1.0 / B, math.inf)
    p_t, u_t = critical_constants()
    if p >= p_t:
        return VnRegion(RegionKind.A_STABLE)
    u_low, u_high = forbidden_u_interval(p)
    return VnRegion(RegionKind.FORBIDDEN_INTERVAL, u_low / B, u_high / B)


def forbidden_u_interval(p: float) -> tuple:
    """Roots ``(u_low, u_high)`` of ``psi(p, .)`` around ``u_tilde`` for ``0 < p < p_tilde``."""
    p_t, u_t = critical_constants()
    if not 0 < p < p_t:
        raise ValueError(f"p must lie in (0, {p_t}), got {p}")
    f = lambda u: psi(p, u)  # noqa: E731
    if f(u_t) >= 0:
        # p within rounding of p_tilde
        return u_t, u_t
    u_low = _bisect(f, 1.0, u_t)
    # psi(p, u) >= p^2 u^2 - u for u >= 1, so psi(p, 2/p^2) > 0
    if p < 1e-150:
        return u_low, math.inf  # the upper root is beyond binary64
    hi = max(2.0 / (p * p), 2.0 * u_t)
    if not math.isfinite(hi):
        return u_low, math.inf
    return u_low, _bisect(f, u_t, hi)


def explicit_margin(a: float, B: float, h: float) -> float:
    """``1 - B h exp((1 + a h)**2 / (B h) - 1)``."""
    bh = B * h
    return 1.0 - bh * math.exp((1.0 + a * h) ** 2 / bh - 1.0)


def explicit_region(a: float, b, norm: str = "euclidean") -> VnRegion:
    """VN stability region of the pseudo-explicit scheme: always ``h <= h_bar``."""
    if a > 0:
        raise ValueError(f"a must be <= 0, got {a}")
    B = effective_b_norm(b, norm) ** 2
    if B == 0:
        if a == 0:
            raise ValueError("a = 0 with b = 0 has no finite stability boundary")
        return VnRegion(RegionKind.STABLE_PREFIX, h_bar=-2.0 / a)
    if a == 0:
        return VnRegion(RegionKind.STABLE_PREFIX, h_bar=1.0 / B)
    p = -a / B
    if p >= 2.0:
        return VnRegion(RegionKind.STABLE_PREFIX, h_bar=-2.0 / a)
    hi = -2.0 / a
    if not math.isfinite(hi):
        # p <= 1 here, and the margin is already negative at B h = 2
        hi = 2.0 / B
    h_bar = _bisect(lambda h: explicit_margin(a, B, h), 1.0 / B, hi)
    return VnRegion(RegionKind.STABLE_PREFIX, h_bar=h_bar)


def vn_region(a: float, b, theta: int, norm: str = "euclidean") -> VnRegion:
    if theta == 1:
        return implicit_region(a, b, norm)
    if theta == 0:
        return explicit_region(a, b, norm)
    raise ValueError(f"theta must be 0 or 1, got {theta}")
