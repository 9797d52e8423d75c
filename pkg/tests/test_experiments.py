import math

import numpy as np
import pytest

from bsde_stab.experiments import (closed_form_y0, convergence_study, fit_loglog_slope,
                                   make_terminal, resolve_workers, stability_sweep,
                                   sufficient_mask, vn_region_table)
from bsde_stab.stability import (LinearVnInputs, critical_constants, implicit_region,
                                 vn_margin, vn_stable)
from oracles import tree_law


def test_closed_form():
    assert closed_form_y0(1, 0, 2) == pytest.approx(math.exp(-1), rel=1e-15)
    assert closed_form_y0(0, 5, 10) == 1.0
    assert closed_form_y0(1, 1, 10) == pytest.approx(-5.654e-3, abs=1e-6)
    assert closed_form_y0(1, 1, 10) == pytest.approx(math.exp(-5) * math.cos(10), rel=1e-14)
    with pytest.raises(ValueError):
        closed_form_y0(1, 1, 0)


def test_terminals():
    x = np.array([0.0, 1.0])
    np.testing.assert_array_equal(make_terminal("cos", 2.0)(x), np.cos(2 * x))
    np.testing.assert_array_equal(make_terminal("one")(x), [1.0, 1.0])
    with pytest.raises(ValueError):
        make_terminal("sin")


def test_zero_driver_error_is_tree_bias():
    T = 1.7
    study = convergence_study(1.0, 0.0, T, 1, [1, 2, 3, 4, 5, 6])
    for row in study.rows:
        d = math.sqrt(3 * T / row.n)
        tree = sum(p * math.cos(j * d) for j, p in tree_law(T, row.n).items())
        assert row.y0 == pytest.approx(tree, abs=1e-14)
        assert row.abs_error == pytest.approx(abs(tree - math.exp(-T / 2)), abs=1e-14)


def test_study_validation():
    with pytest.raises(ValueError):
        convergence_study(1, 1, 10, 1, [128, 64])
    with pytest.raises(ValueError):
        convergence_study(1, 1, 10, 1, [])


def test_convergence_rows_and_tail_monotone():
    study = convergence_study(1, 1, 10, 1, [64, 96, 128, 192, 256, 384, 512])
    errs = [r.abs_error for r in study.rows]
    assert all(e >= 0 for e in errs)
    for prev, cur in zip(errs, errs[1:]):
        assert cur <= 1.05 * prev
    assert math.isnan(study.rows[0].log2_ratio)
    assert study.rows[1].log2_ratio == pytest.approx(math.log2(errs[0] / errs[1]))
    assert -1.3 <= study.fitted_slope <= -0.7


def test_fit_slope():
    n = np.array([10, 20, 40, 80])
    slope, window = fit_loglog_slope(n, 3.0 * n ** -2.0 / 1e3)
    assert slope == pytest.approx(-2.0, abs=1e-12)
    assert window == (0, 3)
    errs = [5.0, 0.1, 0.05, math.nan, 0.02, 0.01, 0.005]
    slope, window = fit_loglog_slope(range(1, 8), errs)
    assert window == (4, 6)
    slope, window = fit_loglog_slope([1, 2, 3, 4, 5], [0.5, 0.4, 0.3, 0.2, 0.1], tail=2)
    assert slope == pytest.approx(math.log(0.5) / math.log(5 / 4))
    assert math.isnan(fit_loglog_slope([1, 2], [2.0, 3.0])[0])


def test_workers_env(monkeypatch):
    monkeypatch.setenv("BSDE_STAB_THREADS", "3")
    assert resolve_workers() == 3
    monkeypatch.setenv("BSDE_STAB_THREADS", "0")
    assert resolve_workers() >= 1
    assert resolve_workers(2) == 2


def test_bz_slice():
    res = stability_sweep("bz", (5, 5, 1), (0.02, 0.2, 10), n=300, theta=1, workers=1)
    row = res.values[0]
    h = res.h_values
    assert np.all(row[h <= 0.04 + 1e-12] <= 1)
    assert np.all(row[h >= 0.1 - 1e-12] == 10)
    assert res.param_name == "b"


def test_abs_z_below_trinomial_condition():
    bs = np.linspace(0.5, 5, 10)
    for b in bs:
        h = np.linspace(0.1, 1.0, 4) / (3 * b * b)
        res = stability_sweep("abs_z", (b, b, 1), (h[0], h[-1], 4), n=300, workers=1)
        assert np.all(res.values <= 1 + 1e-10)


def test_zero_driver_cells():
    res = stability_sweep("bz", (0, 0, 1), (0.05, 2, 8), n=300, workers=1)
    assert np.all(res.values <= 1)
    res = stability_sweep("a_with_fixed_bz", (-3, 0, 4), (0.05, 2, 5), n=50, fixed_b=0,
                          theta=0, workers=1)
    assert np.all((res.values >= 0) & (res.values <= res.cap))


def test_sweep_invariants_and_determinism():
    kw = dict(x_range=(-3, 0, 5), h_range=(0.05, 2, 6), n=60, theta=0)
    serial = stability_sweep("a_with_fixed_bz", workers=1, **kw)
    parallel = stability_sweep("a_with_fixed_bz", workers=2, **kw)
    np.testing.assert_array_equal(serial.values, parallel.values)
    assert np.all((serial.values >= 0) & (serial.values <= serial.cap))
    assert np.all(serial.values[serial.diverged] == serial.cap)
    assert (serial.values == serial.cap).any()


def test_sufficient_region_inside_empirical_region():
    for family in ("bz", "abs_z", "atan_z"):
        res = stability_sweep(family, (-5, 5, 11), (0.002, 0.2, 12), n=100, workers=1)
        mask = sufficient_mask(res)
        assert mask.any()
        assert np.all(res.values[mask] <= 1 + 1e-10)


def test_fixed_horizon_mode():
    res = stability_sweep("bz", (1, 1, 1), (0.1, 0.5, 3), horizon=3.0, workers=1)
    np.testing.assert_array_equal(res.steps[0], [30, 10, 6])


def test_sweep_validation():
    with pytest.raises(ValueError):
        stability_sweep("cubic", (0, 1, 2), (0.1, 1, 2))
    with pytest.raises(ValueError):
        stability_sweep("bz", (0, 1, 2), (0.0, 1, 2))
    with pytest.raises(ValueError):
        stability_sweep("a_with_fixed_bz", (0, 1, 2), (0.1, 1, 2))  # a > 0
    with pytest.raises(ValueError):
        stability_sweep("bz", (1, 0, 2), (0.1, 1, 2))


def test_vn_table_examples():
    p_t, u_t = critical_constants()
    t = vn_region_table(1, [p_t], (5,), [0.2, 0.25, 0.35, 0.4], x_kind="p")
    assert t.stable[0].all()
    # at the tangency itself the margin is zero up to rounding
    assert abs(vn_margin(LinearVnInputs(-p_t * 25, (5,), u_t / 25), 1)) <= 1e-12
    near = implicit_region(-(p_t - 1e-8) * 25, (5,))
    assert near.h_low == pytest.approx(0.2942, abs=1e-3)
    assert near.h_high == pytest.approx(0.2942, abs=1e-3)
    a_pt = [(x, y) for c, x, y in t.boundaries if c == "A"]
    assert a_pt == [(p_t, pytest.approx(0.2942, abs=1e-4))]

    hs = np.linspace(0.01, 0.1, 10)
    t = vn_region_table(1, [0.0], (5,), hs)
    np.testing.assert_array_equal(t.stable[0], hs <= 0.04 + 1e-15)

    hs = np.array([1.0, 1.9, 2.0, 2.1, 3.0])
    t = vn_region_table(0, [-1.0], (0,), hs)
    np.testing.assert_array_equal(t.stable[0], hs <= 2)
    assert ("minus_2_over_a", -1.0, 2.0) in t.boundaries


def test_vn_table_is_pointwise_criterion():
    xs = np.linspace(-3, 0, 13)
    hs = np.linspace(0.01, 2, 17)
    for theta in (0, 1):
        t = vn_region_table(theta, xs, (5, -2), hs)
        for i, a in enumerate(xs):
            for j, h in enumerate(hs):
                assert t.stable[i, j] == vn_stable(LinearVnInputs(a, (5, -2), h), theta)


def test_vn_table_validation():
    with pytest.raises(ValueError):
        vn_region_table(1, [0.1], (5,), [0.1], x_kind="q")
    with pytest.raises(ValueError):
        vn_region_table(1, [0.1], (0,), [0.1], x_kind="p")
