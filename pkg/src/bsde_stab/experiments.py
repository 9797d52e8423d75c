"""Numerical studies: convergence against a closed form, stability sweeps, VN tables."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Optional, Sequence

import numpy as np

from .driver import Driver, abs_z_driver, atan_z_driver, linear_driver
from .lattice import build_lattice
from .scheme import SchemeConfig, solve_backward
from .stability import (
    LinearVnInputs,
    RegionKind,
    critical_constants,
    effective_b_norm,
    stability_inputs_for,
    sufficient_unidim,
    vn_region,
    vn_stable,
)

SWEEP_FAMILIES = ("a_with_fixed_bz", "bz", "abs_z", "atan_z")
TERMINALS = ("cos", "one")
THREADS_ENV = "BSDE_STAB_THREADS"


def closed_form_y0(alpha: float, b: float, T: float) -> float:
    """``Y_0 = exp(-alpha**2 T / 2) cos(alpha b T)`` for ``f = b z``, ``xi = cos(alpha W_T)``."""
    if not T > 0:
        raise ValueError("T must be positive")
    return math.exp(-alpha * alpha * T / 2.0) * math.cos(alpha * b * T)


def _cos_terminal(alpha, x):
    return np.cos(alpha * x)


def _one_terminal(x):
    return np.ones_like(x)


def make_terminal(name: str = "cos", alpha: float = 1.0):
    """Picklable terminal condition by name: ``cos`` is ``cos(alpha x)``, ``one`` is 1."""
    if name == "cos":
        return partial(_cos_terminal, float(alpha))
    if name == "one":
        return _one_terminal
    raise ValueError(f"unknown terminal {name!r}; expected one of {TERMINALS}")


def resolve_workers(workers: Optional[int] = None) -> int:
    """Worker count: explicit value, else ``$BSDE_STAB_THREADS``; 0 means all CPUs."""
    if workers is None:
        raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
        try:
            workers = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if workers < 0:
        raise ValueError("worker count must be >= 0")
    return workers or (os.cpu_count() or 1)


def parallel_map(fn, tasks: list, workers: Optional[int] = None) -> list:
    """``[fn(t) for t in tasks]``, possibly over processes; order follows ``tasks``."""
    workers = resolve_workers(workers)
    if workers == 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceRow:
    n: int
    h: float
    y0: float
    closed_form: float
    abs_error: float
    log2_ratio: float  # log2(previous error / this error); nan on the first row
    diverged: bool = False


@dataclass
class ConvergenceStudy:
    alpha: float
    b: float
    T: float
    theta: int
    n_list: list
    rows: list
    fitted_slope: float
    fit_window: tuple = ()


def fit_loglog_slope(n_values: Sequence[int], errors: Sequence[float],
                     tail: Optional[int] = None) -> tuple:
    """OLS slope of ``log error`` against ``log n``.

    Uses the longest contiguous run where the error is finite, positive and
    below 1 (the latest run on ties), restricted to its last ``tail`` points
    when given.  Returns ``(slope, (first, last))`` as row indices; the slope is
    nan when fewer than two points qualify.
    """
    err = np.asarray(errors, dtype=float)
    ok = np.isfinite(err) & (err > 0) & (err < 1)
    best = (0, -1)
    start = None
    for i, good in enumerate(list(ok) + [False]):
        if good and start is None:
            start = i
        elif not good and start is not None:
            if i - start >= best[1] - best[0] + 1:
                best = (start, i - 1)
            start = None
    first, last = best
    if tail is not None:
        first = max(first, last - tail + 1)
    if last - first + 1 < 2:
        return float("nan"), best
    x = np.log(np.asarray(n_values, dtype=float)[first:last + 1])
    y = np.log(err[first:last + 1])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope), (first, last)


def convergence_study(alpha: float, b: float, T: float, theta: int,
                      n_list: Sequence[int], cap: float = 10.0,
                      tail: Optional[int] = None) -> ConvergenceStudy:
    """Error of the scheme for ``f = b z``, ``xi = cos(alpha W_T)`` over ``n_list``."""
    n_list = [int(n) for n in n_list]
    if not n_list or any(n2 <= n1 for n1, n2 in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be nonempty and strictly increasing")
    exact = closed_form_y0(alpha, b, T)
    drv = linear_driver(0.0, b)
    cfg = SchemeConfig(theta=theta, cap=cap)
    terminal = make_terminal("cos", alpha)
    rows = []
    prev = float("nan")
    for n in n_list:
        res = solve_backward(build_lattice(T, n), drv, cfg, terminal)
        err = float(cap) if res.diverged else abs(res.y0 - exact)
        ratio = math.log2(prev / err) if prev > 0 and err > 0 else float("nan")
        rows.append(ConvergenceRow(n, T / n, res.y0, exact, err, ratio, res.diverged))
        prev = err
    slope, window = fit_loglog_slope(n_list, [r.abs_error for r in rows], tail)
    return ConvergenceStudy(alpha, b, T, theta, n_list, rows, slope, window)


# ---------------------------------------------------------------------------
# stability sweeps


def sweep_driver(family: str, x: float, fixed_b: float = 5.0) -> Driver:
    """Driver for one sweep row: ``x`` is ``a`` for ``a_with_fixed_bz`` and ``b`` otherwise."""
    if family == "a_with_fixed_bz":
        return linear_driver(x, fixed_b)
    if family == "bz":
        return linear_driver(0.0, x)
    if family == "abs_z":
        return abs_z_driver(x)
    if family == "atan_z":
        return atan_z_driver(x)
    raise ValueError(f"unknown sweep family {family!r}; expected one of {SWEEP_FAMILIES}")


def sweep_param_name(family: str) -> str:
    return "a" if family == "a_with_fixed_bz" else "b"


@dataclass
class SweepResult:
    """``|Y_0| ^ cap`` on a (parameter, h) grid; rows follow ``x_values``."""

    family: str
    param_name: str
    x_values: np.ndarray
    h_values: np.ndarray
    values: np.ndarray
    diverged: np.ndarray
    n: int
    theta: int
    terminal: str
    cap: float
    fixed_b: float = 5.0
    alpha: float = 1.0
    horizon: Optional[float] = None
    steps: np.ndarray = field(default=None, repr=False)


def _grid(bounds) -> np.ndarray:
    lo, hi, count = bounds
    count = int(count)
    if count < 1:
        raise ValueError("grid ranges need at least one point")
    if count == 1:
        return np.array([float(lo)])
    if not hi > lo:
        raise ValueError(f"grid range needs lo < hi, got ({lo}, {hi})")
    return np.linspace(float(lo), float(hi), count)


def _sweep_cell(task) -> tuple:
    family, x, h, n, theta, terminal, alpha, fixed_b, horizon, cap = task
    if horizon is None:
        T, steps = n * h, n
    else:
        steps = max(1, int(round(horizon / h)))
        T = horizon
    res = solve_backward(build_lattice(T, steps), sweep_driver(family, x, fixed_b),
                         SchemeConfig(theta=theta, cap=cap), make_terminal(terminal, alpha))
    return res.capped(cap), res.diverged, steps


def stability_sweep(family: str, x_range: tuple, h_range: tuple, n: int = 300,
                    theta: int = 1, terminal: str = "cos", cap: float = 10.0,
                    fixed_b: float = 5.0, alpha: float = 1.0,
                    horizon: Optional[float] = None,
                    workers: Optional[int] = None) -> SweepResult:
    """Run the scheme on every ``(x, h)`` cell and record ``|Y_0| ^ cap``.

    By default ``n`` is fixed and the horizon is ``T = n h``, so larger steps
    also mean a longer horizon.  Passing ``horizon`` fixes ``T`` instead and
    uses ``round(T / h)`` steps per cell.

    Ranges are ``(lo, hi, count)`` for ``numpy.linspace``.
    """
    if family not in SWEEP_FAMILIES:
        raise ValueError(f"unknown sweep family {family!r}; expected one of {SWEEP_FAMILIES}")
    if terminal not in TERMINALS:
        raise ValueError(f"unknown terminal {terminal!r}; expected one of {TERMINALS}")
    xs, hs = _grid(x_range), _grid(h_range)
    if hs.min() <= 0:
        raise ValueError("step sizes must be positive")
    if int(n) < 1:
        raise ValueError("n must be a positive integer")
    SchemeConfig(theta=theta, cap=cap)  # validates theta and cap
    for x in xs:
        sweep_driver(family, x, fixed_b)  # validates family parameters (a <= 0)
    tasks = [(family, float(x), float(h), int(n), theta, terminal, alpha, fixed_b,
              horizon, cap) for x in xs for h in hs]
    out = parallel_map(_sweep_cell, tasks, workers)
    shape = (xs.size, hs.size)
    values = np.array([o[0] for o in out], dtype=float).reshape(shape)
    diverged = np.array([o[1] for o in out], dtype=bool).reshape(shape)
    steps = np.array([o[2] for o in out], dtype=int).reshape(shape)
    return SweepResult(family, sweep_param_name(family), xs, hs, values, diverged, int(n),
                       theta, terminal, float(cap), float(fixed_b), float(alpha), horizon,
                       steps)


def sufficient_mask(result: SweepResult) -> np.ndarray:
    """Cells where the one-dimensional sufficient condition holds on the trinomial lattice.

    ``max|H| = sqrt(3/h)``; cells whose driver does not meet the condition's
    hypotheses (pseudo-explicit with ``l^Y = 0`` and ``L^Y > 0``) count as False.
    """
    mask = np.zeros(result.values.shape, dtype=bool)
    for i, x in enumerate(result.x_values):
        drv = sweep_driver(result.family, x, result.fixed_b)
        for j, h in enumerate(result.h_values):
            h_eff = h if result.horizon is None else result.horizon / result.steps[i, j]
            inp = stability_inputs_for(drv, result.theta, h_eff, max_abs_h=math.sqrt(3.0 / h_eff))
            try:
                mask[i, j] = sufficient_unidim(inp)
            except ValueError:
                mask[i, j] = False
    return mask


# ---------------------------------------------------------------------------
# VN region tables


@dataclass
class VnRegionTable:
    """Criterion verdicts on an (``a`` or ``p``, ``h``) grid plus boundary curves.

    ``boundaries`` holds ``(curve, x, y)`` triples with ``x`` in the same unit
    as ``x_values`` and ``y`` a step size.  Curves: ``h_low`` and ``h_high``
    (implicit forbidden interval), ``h_bar`` and ``minus_2_over_a``
    (pseudo-explicit), and the tangency point ``A``.
    """

    theta: int
    b: tuple
    x_kind: str
    x_values: np.ndarray
    h_values: np.ndarray
    stable: np.ndarray
    boundaries: list
    norm: str = "euclidean"


def vn_region_table(theta: int, x_values: Sequence[float], b, h_values: Sequence[float],
                    x_kind: str = "a", norm: str = "euclidean") -> VnRegionTable:
    """Pointwise VN verdicts and analytic boundaries.

    ``x_kind="a"`` reads ``x_values`` as drift coefficients ``a <= 0``;
    ``x_kind="p"`` reads them as ``p = -a / |b|**2 >= 0``.
    """
    if x_kind not in ("a", "p"):
        raise ValueError("x_kind must be 'a' or 'p'")
    b = tuple(float(v) for v in np.atleast_1d(b))
    B = effective_b_norm(b, norm) ** 2
    if x_kind == "p" and B == 0:
        raise ValueError("a p-axis needs b != 0")
    xs = np.asarray(x_values, dtype=float)
    hs = np.asarray(h_values, dtype=float)
    a_values = xs if x_kind == "a" else -xs * B

    stable = np.zeros((xs.size, hs.size), dtype=bool)
    for i, a in enumerate(a_values):
        for j, h in enumerate(hs):
            stable[i, j] = vn_stable(LinearVnInputs(a, b, h), theta, norm)

    curves = []
    for x, a in zip(xs, a_values):
        if theta == 0 and a == 0 and B == 0:
            continue
        region = vn_region(a, b, theta, norm)
        if region.kind is RegionKind.FORBIDDEN_INTERVAL:
            curves.append(("h_low", float(x), region.h_low))
            if math.isfinite(region.h_high):
                curves.append(("h_high", float(x), region.h_high))
        elif region.kind is RegionKind.STABLE_PREFIX:
            curves.append(("h_bar", float(x), region.h_bar))
        if theta == 0 and a < 0:
            curves.append(("minus_2_over_a", float(x), -2.0 / a))
    if theta == 1 and B > 0:
        p_t, u_t = critical_constants()
        x_a = -p_t * B if x_kind == "a" else p_t
        curves.append(("A", x_a, u_t / B))
    return VnRegionTable(theta, b, x_kind, xs, hs, stable, curves, norm)
