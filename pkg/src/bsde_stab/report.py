"""CSV writers for the experiment results.

Numbers are written with ``repr``, the shortest decimal string that
round-trips a binary64 value, so identical runs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import math

CONVERGE_HEADER = ("n", "h", "y0", "closed_form", "abs_error")
BOUNDARY_HEADER = ("curve", "x", "y")
MATRIX_CORNER = "param\\h"


def fmt(x) -> str:
    if isinstance(x, (bool,)):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _write(path, rows, footer=()):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    for line in footer:
        buf.write(line + "\n")
    text = buf.getvalue()
    if path is None:
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def convergence_csv(study, path=None) -> str:
    """``n,h,y0,closed_form,abs_error`` rows, then a ``# fitted_slope=`` comment line."""
    rows = [CONVERGE_HEADER]
    for r in study.rows:
        rows.append((fmt(r.n), fmt(r.h), fmt(r.y0), fmt(r.closed_form), fmt(r.abs_error)))
    footer = [f"# fitted_slope={fmt(study.fitted_slope)}"]
    return _write(path, rows, footer)


def matrix_csv(x_values, h_values, matrix, path=None, as_flags: bool = False) -> str:
    rows = [(MATRIX_CORNER, *(fmt(h) for h in h_values))]
    for x, row in zip(x_values, matrix):
        cells = (("1" if v else "0") for v in row) if as_flags else (fmt(v) for v in row)
        rows.append((fmt(x), *cells))
    return _write(path, rows)


def sweep_csv(result, path=None) -> str:
    return matrix_csv(result.x_values, result.h_values, result.values, path)


def vn_region_csv(table, path=None) -> str:
    return matrix_csv(table.x_values, table.h_values, table.stable, path, as_flags=True)


def boundaries_csv(table, path=None) -> str:
    rows = [BOUNDARY_HEADER]
    rows.extend((name, fmt(x), fmt(y)) for name, x, y in table.boundaries
                if math.isfinite(y))
    return _write(path, rows)
