"""Matplotlib figures for the CLI report path.

Imported lazily by the CLI so the numerical core has no rendering dependency.
The output format follows the file extension (``.svg``, ``.png``, ``.pdf``).
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import sweep_driver  # noqa: E402
from .stability import RegionKind, vn_region  # noqa: E402

FIGSIZE = (7.0, 4.3)
# svg output embeds a date and random element ids unless told otherwise
_SAVE_META = {"svg": {"Date": None}, "pdf": {"CreationDate": None}}
_SAVE_RC = {"svg.hashsalt": "bsde-stab"}


def _save(fig, path):
    ext = str(path).rsplit(".", 1)[-1].lower()
    with matplotlib.rc_context(_SAVE_RC):
        fig.savefig(path, bbox_inches="tight", metadata=_SAVE_META.get(ext))
    plt.close(fig)
    return path


def plot_convergence(study, path):
    """Log-log error against step count, with an order-one reference line."""
    n = np.array([r.n for r in study.rows], dtype=float)
    err = np.array([r.abs_error for r in study.rows], dtype=float)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.loglog(n, err, "ko-", lw=1.2, ms=4, label=r"$|\mathcal{Y}_0 - Y_0|$")
    good = np.isfinite(err) & (err > 0)
    if good.any():
        i = np.flatnonzero(good)[-1]
        ax.loglog(n, err[i] * n[i] / n, "k:", lw=1.0, label="slope -1")
    ax.set_xlabel("number of steps n")
    ax.set_ylabel("error")
    scheme = "implicit" if study.theta == 1 else "pseudo-explicit"
    ax.set_title(f"Euler ({scheme}), b={study.b:g}, T={study.T:g}, "
                 f"slope={study.fitted_slope:.3f}")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best")
    return _save(fig, path)


def _edges(v):
    v = np.asarray(v, dtype=float)
    if v.size == 1:
        return np.array([v[0] - 0.5, v[0] + 0.5])
    mid = 0.5 * (v[1:] + v[:-1])
    return np.concatenate([[2 * v[0] - mid[0]], mid, [2 * v[-1] - mid[-1]]])


def plot_sweep(result, path):
    """Heatmap of ``|Y_0| ^ cap`` with the trinomial sufficient-condition boundary."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    mesh = ax.pcolormesh(_edges(result.h_values), _edges(result.x_values), result.values,
                         cmap="inferno", vmin=0.0, vmax=result.cap, shading="flat")
    fig.colorbar(mesh, ax=ax, label=rf"$|Y_0| \wedge {result.cap:g}$")

    xs = np.linspace(result.x_values.min(), result.x_values.max(), 400)
    h_suff = []
    for x in xs:
        lz = sweep_driver(result.family, x, result.fixed_b).lipschitz_z
        h_suff.append(1.0 / (3.0 * lz * lz) if lz > 0 else math.nan)
    if result.theta == 1:
        ax.plot(h_suff, xs, "c--", lw=1.0, label=r"$h = 1/(3 (L^Z)^2)$")
    if result.family == "a_with_fixed_bz":
        _overlay_vn(ax, xs, result.fixed_b, result.theta)
    ax.set_xlim(_edges(result.h_values)[[0, -1]])
    ax.set_ylim(_edges(result.x_values)[[0, -1]])
    ax.set_xlabel("h")
    ax.set_ylabel(result.param_name)
    scheme = "implicit" if result.theta == 1 else "pseudo-explicit"
    ax.set_title(f"{result.family}, {scheme}, n={result.n}")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="upper right", fontsize=8)
    return _save(fig, path)


def _overlay_vn(ax, a_values, b, theta):
    lo, hi, bar = [], [], []
    for a in a_values:
        if theta == 0 and a == 0 and b == 0:
            lo.append(math.nan); hi.append(math.nan); bar.append(math.nan)
            continue
        reg = vn_region(a, (b,), theta)
        forb = reg.kind is RegionKind.FORBIDDEN_INTERVAL
        lo.append(reg.h_low if forb else math.nan)
        hi.append(reg.h_high if forb and math.isfinite(reg.h_high) else math.nan)
        bar.append(reg.h_bar if reg.kind is RegionKind.STABLE_PREFIX else math.nan)
    if theta == 1:
        ax.plot(lo, a_values, "w-", lw=1.0, label="VN boundary")
        ax.plot(hi, a_values, "w-", lw=1.0)
    else:
        ax.plot(bar, a_values, "w-", lw=1.0, label="VN boundary")


def plot_vn_region(table, path):
    """Stable (dark) and unstable (light) cells with the analytic boundary curves."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.pcolormesh(_edges(table.h_values), _edges(table.x_values),
                  (~table.stable).astype(float), cmap="cividis", vmin=0, vmax=1,
                  shading="flat")
    styles = {"h_low": "w-", "h_high": "w-", "h_bar": "w-", "minus_2_over_a": "c--"}
    for name, style in styles.items():
        pts = sorted((x, y) for n, x, y in table.boundaries if n == name)
        if pts:
            x, y = zip(*pts)
            ax.plot(y, x, style, lw=1.2, label=name)
    for n, x, y in table.boundaries:
        if n == "A":
            ax.plot([y], [x], "ro", ms=5)
            ax.annotate("A", (y, x), textcoords="offset points", xytext=(5, 5), color="r")
    ax.set_xlim(_edges(table.h_values)[[0, -1]])
    ax.set_ylim(_edges(table.x_values)[[0, -1]])
    ax.set_xlabel("h")
    ax.set_ylabel(table.x_kind)
    scheme = "implicit" if table.theta == 1 else "pseudo-explicit"
    b = ", ".join(f"{v:g}" for v in table.b)
    ax.set_title(f"VN stability region, {scheme}, b=({b})")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="upper right", fontsize=8)
    return _save(fig, path)
