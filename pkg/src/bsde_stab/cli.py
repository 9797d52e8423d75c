"""Command-line front end.

Subcommands: ``converge``, ``sweep``, ``vn-region``, ``vn-constants`` and
``check``.  Settings come from an optional ``--config`` file of ``key = value``
lines (``#`` starts a comment); flags given on the command line win.  Keys use
the flag names with dashes or underscores, e.g. ``fixed_b = 5``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import re
import sys
from dataclasses import dataclass
from typing import Optional

from . import report
from .driver import DRIVER_FAMILIES, make_driver
from .errors import NumericalFailure
from .experiments import (SWEEP_FAMILIES, TERMINALS, convergence_study, stability_sweep,
                          vn_region_table)
from .stability import (NORMS, LinearVnInputs, RegionKind, critical_constants,
                        effective_b_norm, explicit_margin, stability_inputs_for,
                        sufficient_multidim_lhs, sufficient_unidim_lhs, vn_region,
                        vn_stable)

SUBCOMMANDS = ("converge", "sweep", "vn-region", "vn-constants", "check")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


# ---------------------------------------------------------------------------
# parsing helpers


def _floats(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text) -> tuple:
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _range(text) -> tuple:
    vals = _floats(text)
    if len(vals) != 3 or vals[2] != int(vals[2]) or vals[2] < 1:
        raise ConfigError(f"a range is 'lo,hi,count' with integer count >= 1, got {text!r}")
    return vals[0], vals[1], int(vals[2])


def read_config_file(path: str) -> dict:
    """``key = value`` pairs; blank lines and ``#`` comments are skipped."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    """Merged settings for one invocation; only the fields the subcommand uses matter."""

    subcommand: str
    theta: int = 1
    driver: str = "linear"
    a: float = 0.0
    b: tuple = (1.0,)
    alpha: float = 1.0
    T: float = 10.0
    n: tuple = (64, 128, 256, 512)
    h: Optional[float] = None
    Lambda: float = 1.0
    family: str = "bz"
    terminal: str = "cos"
    x_range: Optional[tuple] = None
    h_range: tuple = (2.0 / 120, 2.0, 121)
    fixed_b: float = 5.0
    horizon: Optional[float] = None
    cap: float = 10.0
    tail: Optional[int] = None
    x_kind: str = "a"
    norm: str = "euclidean"
    workers: Optional[int] = None
    out: Optional[str] = None
    boundaries: Optional[str] = None
    plot: Optional[str] = None

    def validate(self):
        if self.theta not in (0, 1):
            raise ConfigError(f"theta must be 0 or 1, got {self.theta}")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if not self.cap > 0:
            raise ConfigError("cap must be positive")
        sub = self.subcommand
        if sub == "converge":
            if not self.n:
                raise ConfigError("converge needs a list of step counts (--n)")
            if len(self.b) != 1:
                raise ConfigError("converge takes a scalar b")
            if not self.T > 0:
                raise ConfigError("T must be positive")
        elif sub == "sweep":
            if self.family not in SWEEP_FAMILIES:
                raise ConfigError(f"family must be one of {SWEEP_FAMILIES}, got {self.family!r}")
            if self.terminal not in TERMINALS:
                raise ConfigError(f"terminal must be one of {TERMINALS}, got {self.terminal!r}")
            if len(self.n) != 1 or self.n[0] < 1:
                raise ConfigError("sweep takes a single positive step count (--n)")
        elif sub == "vn-region":
            if self.x_kind not in ("a", "p"):
                raise ConfigError("x-kind must be 'a' or 'p'")
        elif sub == "check":
            if self.driver not in DRIVER_FAMILIES:
                raise ConfigError(f"driver must be one of {DRIVER_FAMILIES}, got {self.driver!r}")
            if self.h is None or not self.h > 0:
                raise ConfigError("check needs a positive step size (--h)")
        for path in (self.out, self.boundaries, self.plot):
            if path:
                _check_writable(path)
        return self


def _check_writable(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise ConfigError(f"output directory does not exist: {parent}")
    if not os.access(parent, os.W_OK):
        raise ConfigError(f"output directory is not writable: {parent}")


# key -> converter; None means "keep the string"
_CONVERTERS = {
    "theta": int, "driver": None, "a": float, "b": _floats, "alpha": float, "T": float,
    "n": _ints, "h": float, "Lambda": float, "family": None, "terminal": None,
    "x_range": _range, "h_range": _range, "fixed_b": float, "horizon": float, "cap": float,
    "tail": int, "x_kind": None, "norm": None, "workers": int, "out": None,
    "boundaries": None, "plot": None,
}
_KEY_ALIASES = {"t": "T", "lambda": "Lambda"}

_SUB_DEFAULTS = {
    "converge": {"b": (1.0,), "out": "converge.csv"},
    "sweep": {"n": (300,), "b": (5.0,), "out": "sweep.csv"},
    "vn-region": {"b": (5.0,), "out": "vn_region.csv"},
    "check": {"b": (1.0,)},
}
_X_RANGE_DEFAULT = {
    "a_with_fixed_bz": (-3.0, 0.0, 61),
    "bz": (0.0, 6.0, 61),
    "abs_z": (0.0, 6.0, 61),
    "atan_z": (0.0, 6.0, 61),
    "a": (-3.0, 0.0, 61),
    "p": (0.0, 0.3, 61),
}


def _convert(key, value):
    conv = _CONVERTERS[key]
    if conv is None or not isinstance(value, str):
        return value
    try:
        return conv(value)
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def build_config(subcommand: str, file_values: dict, flag_values: dict) -> RunConfig:
    """Merge defaults, config-file values and flags (in that order of precedence)."""
    merged = dict(_SUB_DEFAULTS.get(subcommand, {}))
    for source in (file_values, flag_values):
        for key, value in source.items():
            if value is None:
                continue
            key = _KEY_ALIASES.get(key, key)
            if key not in _CONVERTERS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _convert(key, value)
    cfg = RunConfig(subcommand=subcommand, **merged)
    if cfg.x_range is None:
        axis = cfg.family if subcommand == "sweep" else cfg.x_kind
        cfg.x_range = _X_RANGE_DEFAULT.get(axis, (-3.0, 0.0, 61))
    return cfg.validate()


# ---------------------------------------------------------------------------
# argparse


def _add_common(p):
    p.add_argument("--config", metavar="FILE", help="key = value settings file")
    p.add_argument("--theta", type=int, choices=(0, 1), help="0 pseudo-explicit, 1 implicit")


def _add_output(p, plot=True):
    p.add_argument("--out", metavar="CSV", help="output CSV path")
    if plot:
        p.add_argument("--plot", metavar="FILE",
                       help="also render a figure (format from extension, e.g. .svg)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsde-stab",
        description="Stability and convergence experiments for theta-schemes on BSDEs.")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("converge", help="error of Y0 against the closed form over n")
    _add_common(p)
    p.add_argument("--alpha", type=str, help="terminal cos(alpha W_T)")
    p.add_argument("--b", type=str, help="driver f = b z")
    p.add_argument("--T", dest="T", type=str, help="horizon")
    p.add_argument("--n", type=str, help="comma-separated step counts, increasing")
    p.add_argument("--tail", type=str, help="fit slope on the last TAIL usable points")
    p.add_argument("--cap", type=str)
    _add_output(p)

    p = sub.add_parser("sweep", help="|Y0| ^ cap over a (parameter, h) grid")
    _add_common(p)
    p.add_argument("--family", type=str, help=", ".join(SWEEP_FAMILIES))
    p.add_argument("--x-range", dest="x_range", type=str, help="lo,hi,count")
    p.add_argument("--h-range", dest="h_range", type=str, help="lo,hi,count")
    p.add_argument("--n", type=str, help="steps per cell (T = n h)")
    p.add_argument("--horizon", type=str, help="fix T instead and use round(T/h) steps")
    p.add_argument("--fixed-b", dest="fixed_b", type=str, help="b for a_with_fixed_bz")
    p.add_argument("--terminal", type=str, help=", ".join(TERMINALS))
    p.add_argument("--alpha", type=str)
    p.add_argument("--cap", type=str)
    p.add_argument("--workers", type=str, help="process count (0 = auto)")
    _add_output(p)

    p = sub.add_parser("vn-region", help="VN verdict matrix and boundary curves")
    _add_common(p)
    p.add_argument("--b", type=str, help="comma-separated vector b")
    p.add_argument("--x-kind", dest="x_kind", type=str, choices=("a", "p"))
    p.add_argument("--x-range", dest="x_range", type=str, help="lo,hi,count")
    p.add_argument("--h-range", dest="h_range", type=str, help="lo,hi,count")
    p.add_argument("--norm", type=str, choices=NORMS)
    p.add_argument("--boundaries", metavar="CSV",
                   help="boundary curves path (default: boundaries.csv next to --out)")
    _add_output(p)

    p = sub.add_parser("vn-constants", help="print the critical constants p~ and u~")
    p.add_argument("--config", metavar="FILE", help=argparse.SUPPRESS)

    p = sub.add_parser("check", help="sufficient and VN verdicts for one configuration")
    _add_common(p)
    p.add_argument("--driver", type=str, help=", ".join(DRIVER_FAMILIES))
    p.add_argument("--a", type=str)
    p.add_argument("--b", type=str, help="scalar, or comma-separated vector for linear")
    p.add_argument("--h", type=str)
    p.add_argument("--Lambda", dest="Lambda", type=str, help="H-moment bound (default 1)")
    p.add_argument("--norm", type=str, choices=NORMS)
    return parser


# ---------------------------------------------------------------------------
# subcommands


def _g(x) -> str:
    return f"{x:.6g}"


def _plotting():
    try:
        from . import plotting
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise ConfigError(f"--plot needs matplotlib ({exc})") from None
    return plotting


def cmd_converge(cfg: RunConfig, out) -> int:
    study = convergence_study(cfg.alpha, cfg.b[0], cfg.T, cfg.theta, cfg.n, cfg.cap, cfg.tail)
    report.convergence_csv(study, cfg.out)
    print(f"wrote {cfg.out} ({len(study.rows)} rows, fitted_slope={_g(study.fitted_slope)})",
          file=out)
    if cfg.plot:
        _plotting().plot_convergence(study, cfg.plot)
        print(f"wrote {cfg.plot}", file=out)
    return 0


def cmd_sweep(cfg: RunConfig, out) -> int:
    res = stability_sweep(cfg.family, cfg.x_range, cfg.h_range, n=cfg.n[0], theta=cfg.theta,
                          terminal=cfg.terminal, cap=cfg.cap, fixed_b=cfg.fixed_b,
                          alpha=cfg.alpha, horizon=cfg.horizon, workers=cfg.workers)
    report.sweep_csv(res, cfg.out)
    print(f"wrote {cfg.out} ({res.values.shape[0]}x{res.values.shape[1]} cells, "
          f"{int(res.diverged.sum())} diverged)", file=out)
    if cfg.plot:
        _plotting().plot_sweep(res, cfg.plot)
        print(f"wrote {cfg.plot}", file=out)
    return 0


def _linspace(r):
    import numpy as np

    lo, hi, count = r
    if count > 1 and not hi > lo:
        raise ConfigError(f"range needs lo < hi, got ({lo}, {hi})")
    return np.linspace(lo, hi, count) if count > 1 else np.array([lo])


def cmd_vn_region(cfg: RunConfig, out) -> int:
    xs, hs = _linspace(cfg.x_range), _linspace(cfg.h_range)
    table = vn_region_table(cfg.theta, xs, cfg.b, hs, x_kind=cfg.x_kind, norm=cfg.norm)
    bpath = cfg.boundaries or os.path.join(os.path.dirname(cfg.out), "boundaries.csv")
    report.vn_region_csv(table, cfg.out)
    report.boundaries_csv(table, bpath)
    print(f"wrote {cfg.out} and {bpath}", file=out)
    if cfg.plot:
        _plotting().plot_vn_region(table, cfg.plot)
        print(f"wrote {cfg.plot}", file=out)
    return 0


def cmd_vn_constants(cfg: RunConfig, out) -> int:
    p_t, u_t = critical_constants()
    print(f"p_tilde={p_t:.6g}, u_tilde={u_t:.6g}", file=out)
    print(f"# full precision: p_tilde={p_t!r}, u_tilde={u_t!r}", file=out)
    return 0


def _vn_line(a, b, h, theta, norm) -> str:
    B = effective_b_norm(b, norm) ** 2
    bh = B * h
    label = "|b|^2 h" if norm == "euclidean" else "|b|_inf^2 h"
    verdict = "STABLE" if vn_stable(LinearVnInputs(a, b, h), theta, norm) else "UNSTABLE"
    if theta == 1:
        if bh <= 1:
            return f"VN: {verdict} ({label} = {_g(bh)} <= 1)"
        if a == 0:
            return f"VN: {verdict} ({label} = {_g(bh)} > 1)"
        m = (1 - a * h) ** 2 - bh * math.exp(1.0 / bh - 1.0)
        rel = ">=" if m >= 0 else "<"
        return f"VN: {verdict} ((1-ah)^2 - {label} e^(1/({label})-1) = {_g(m)} {rel} 0)"
    if B == 0 or bh <= (1 + a * h) ** 2:
        if a == 0:
            return f"VN: {verdict} (a = 0, {label} = {_g(bh)})"
        rel = "<=" if h <= -2.0 / a else ">"
        return f"VN: {verdict} (h = {_g(h)} {rel} -2/a = {_g(-2.0 / a)})"
    m = explicit_margin(a, B, h)
    rel = ">=" if m >= 0 else "<"
    return f"VN: {verdict} (1 - {label} e^((1+ah)^2/({label})-1) = {_g(m)} {rel} 0)"


def _region_line(a, b, theta, norm) -> str:
    if theta == 0 and a == 0 and effective_b_norm(b, norm) == 0:
        return "VN region: A-stable (f = 0)"
    reg = vn_region(a, b, theta, norm)
    if reg.kind is RegionKind.A_STABLE:
        return "VN region: A-stable"
    if reg.kind is RegionKind.STABLE_PREFIX:
        return f"VN region: stable iff h <= {_g(reg.h_bar)}"
    hi = "inf" if math.isinf(reg.h_high) else _g(reg.h_high)
    return f"VN region: unstable iff h in ({_g(reg.h_low)}, {hi})"


def _suff_line(name, fn, inp) -> str:
    try:
        lhs = fn(inp)
    except ValueError as exc:
        return f"sufficient ({name}): n/a ({exc})"
    ok = "SATISFIED" if lhs <= 1 else "NOT SATISFIED"
    rel = "<=" if lhs <= 1 else ">"
    return f"sufficient ({name}): {ok} (lhs = {_g(lhs)} {rel} 1)"


def cmd_check(cfg: RunConfig, out) -> int:
    h, theta = cfg.h, cfg.theta
    if cfg.driver != "linear" and len(cfg.b) != 1:
        raise ConfigError(f"driver {cfg.driver} takes a scalar b")
    if cfg.driver == "linear" and cfg.a > 0:
        raise ConfigError("linear driver needs a <= 0")
    scheme = "implicit" if theta == 1 else "pseudo-explicit"
    b_txt = ",".join(_g(v) for v in cfg.b)
    print(f"driver: {cfg.driver}(a={_g(cfg.a)}, b={b_txt})", file=out)
    print(f"scheme: theta={theta} ({scheme}), h={_g(h)}", file=out)

    # scalar driver for the sufficient conditions; |b| stands in for a vector b
    b_scalar = cfg.b[0] if len(cfg.b) == 1 else math.hypot(*cfg.b)
    drv = make_driver(cfg.driver, cfg.a, b_scalar)
    multi = stability_inputs_for(drv, theta, h, Lambda=cfg.Lambda)
    tree = stability_inputs_for(drv, theta, h, max_abs_h=math.sqrt(3.0 / h))
    print(_suff_line(f"multidim, Lambda={_g(cfg.Lambda)}", sufficient_multidim_lhs, multi),
          file=out)
    print(_suff_line("unidim, trinomial max|H|=sqrt(3/h)", sufficient_unidim_lhs, tree),
          file=out)
    if cfg.driver == "linear":
        print(_vn_line(cfg.a, cfg.b, h, theta, cfg.norm), file=out)
        print(_region_line(cfg.a, cfg.b, theta, cfg.norm), file=out)
    else:
        print("VN: n/a (driver is not linear)", file=out)
    return 0


_NUMERIC_START = re.compile(r"^-[\d.]")


def _glue_negative_values(argv) -> list:
    # "--x-range -3,0,61" would read -3,0,61 as an option; glue it to its flag
    out = []
    argv = list(argv)
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and _NUMERIC_START.match(argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


_COMMANDS = {"converge": cmd_converge, "sweep": cmd_sweep, "vn-region": cmd_vn_region,
             "vn-constants": cmd_vn_constants, "check": cmd_check}


def run(argv=None, out=None, err=None) -> int:
    """Parse ``argv``, run the subcommand and return the exit code."""
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        ns = parser.parse_args(_glue_negative_values(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:  # argparse usage errors
        return 0 if exc.code == 0 else 1
    flags = {k: v for k, v in vars(ns).items() if k not in ("subcommand", "config")}
    try:
        file_values = read_config_file(ns.config) if ns.config else {}
        cfg = build_config(ns.subcommand, file_values, flags)
        return _COMMANDS[ns.subcommand](cfg, out)
    except NumericalFailure as exc:
        print(f"bsde-stab: numerical failure: {exc}", file=err)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"bsde-stab: error: {exc}", file=err)
        return 1
    except OSError as exc:
        print(f"bsde-stab: error: {exc}", file=err)
        return 1


def main():  # pragma: no cover
    sys.exit(run())
