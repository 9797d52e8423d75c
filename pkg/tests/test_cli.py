import csv
import io
import math

import pytest

from bsde_stab import cli, report
from bsde_stab.experiments import convergence_study


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(argv, out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def rows(path):
    with open(path) as fh:
        return [r for r in csv.reader(fh) if r and not r[0].startswith("#")]


def test_vn_constants():
    code, out, _ = run(["vn-constants"])
    assert code == 0
    first, full = out.splitlines()
    assert first == "p_tilde=0.103417, u_tilde=7.35491"
    p = float(full.split("p_tilde=")[1].split(",")[0])
    u = float(full.split("u_tilde=")[1])
    assert abs(p - 0.103417) <= 1e-4 and abs(u - 7.35491) <= 1e-3


def test_check_unstable_implicit():
    code, out, _ = run(["check", "--theta", "1", "--driver", "linear", "--a", "0", "--b", "5",
                        "--h", "0.05"])
    assert code == 0
    assert "VN: UNSTABLE (|b|^2 h = 1.25 > 1)" in out.splitlines()
    assert "sufficient (unidim, trinomial max|H|=sqrt(3/h)): NOT SATISFIED" in out


def test_check_reports():
    _, out, _ = run(["check", "--theta", "0", "--a", "-4", "--b", "1", "--h", "0.5"])
    assert "VN: STABLE (h = 0.5 <= -2/a = 0.5)" in out
    assert "VN region: stable iff h <= 0.5" in out
    _, out, _ = run(["check", "--theta", "1", "--a", "-3", "--b", "5", "--h", "1"])
    assert "VN: STABLE" in out and "VN region: A-stable" in out
    _, out, _ = run(["check", "--driver", "atan_z", "--b", "2", "--h", "0.05"])
    assert "VN: n/a (driver is not linear)" in out
    assert "sufficient (unidim, trinomial max|H|=sqrt(3/h)): SATISFIED" in out


def test_converge_csv(tmp_path):
    out_csv = tmp_path / "c.csv"
    code, _, _ = run(["converge", "--alpha", "1", "--b", "1", "--T", "10",
                      "--n", "64,128,256,512", "--out", str(out_csv)])
    assert code == 0
    text = out_csv.read_text()
    lines = text.splitlines()
    assert lines[0] == "n,h,y0,closed_form,abs_error"
    assert len(lines) == 6 and lines[-1].startswith("# fitted_slope=")
    slope = float(lines[-1].split("=")[1])
    assert -1.3 <= slope <= -0.7
    r = rows(out_csv)[1:]
    assert [int(x[0]) for x in r] == [64, 128, 256, 512]
    for n, h, y0, cf, err in r:
        assert float(err) == abs(float(y0) - float(cf))
        assert float(h) == 10 / int(n)


def test_byte_identical_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "--family", "atan_z", "--x-range", "-4,4,5", "--h-range", "0.05,1,4",
            "--n", "40"]
    assert run(args + ["--out", str(a), "--workers", "1"])[0] == 0
    assert run(args + ["--out", str(b), "--workers", "2"])[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_sweep_csv_schema(tmp_path):
    out_csv = tmp_path / "s.csv"
    code, _, _ = run(["sweep", "--family", "bz", "--x-range", "0,5,3", "--h-range",
                      "0.02,0.2,4", "--n", "300", "--out", str(out_csv)])
    assert code == 0
    r = rows(out_csv)
    assert r[0][0] == "param\\h"
    assert [float(v) for v in r[0][1:]] == pytest.approx([0.02, 0.08, 0.14, 0.2])
    assert [float(x[0]) for x in r[1:]] == [0.0, 2.5, 5.0]
    vals = [float(v) for x in r[1:] for v in x[1:]]
    assert all(0 <= v <= 10 for v in vals)


def test_vn_region_files(tmp_path):
    out_csv = tmp_path / "v.csv"
    code, _, _ = run(["vn-region", "--theta", "1", "--b", "5", "--x-range", "-3,0,4",
                      "--h-range", "0.01,0.1,10", "--out", str(out_csv)])
    assert code == 0
    r = rows(out_csv)
    assert r[0][0] == "param\\h" and len(r) == 5 and len(r[1]) == 11
    assert set(v for x in r[1:] for v in x[1:]) <= {"0", "1"}
    a0 = [x for x in r[1:] if float(x[0]) == 0.0][0]
    assert a0[1:] == ["1"] * 4 + ["0"] * 6
    b = rows(tmp_path / "boundaries.csv")
    assert b[0] == ["curve", "x", "y"]
    assert {x[0] for x in b[1:]} >= {"h_low", "h_high", "A"}


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# convergence run\nalpha = 1\nb = 1   # driver b z\nT = 10\n"
                   "n = 16,32\n")
    out_csv = tmp_path / "c.csv"
    code, _, _ = run(["converge", "--config", str(cfg), "--n", "32,64", "--out", str(out_csv)])
    assert code == 0
    assert [int(x[0]) for x in rows(out_csv)[1:]] == [32, 64]


@pytest.mark.parametrize("argv", [
    ["converge", "--n", "128,64"],
    ["converge", "--n", "a,b"],
    ["check", "--h", "0"],
    ["check", "--driver", "cubic", "--h", "0.1"],
    ["check", "--a", "1", "--h", "0.1"],
    ["sweep", "--family", "nope"],
    ["sweep", "--x-range", "0,1"],
    ["converge", "--out", "/nonexistent/dir/c.csv"],
    ["converge", "--config", "/nonexistent.cfg"],
    ["frobnicate"],
])
def test_config_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, _, err = run(argv)
    assert code == 1


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    code, _, err = run(["converge", "--config", str(cfg), "--out", str(tmp_path / "c.csv")])
    assert code == 1 and "unknown config key" in err
    cfg.write_text("just words\n")
    code, _, err = run(["converge", "--config", str(cfg), "--out", str(tmp_path / "c.csv")])
    assert code == 1 and "bad.cfg:1" in err


def test_numerical_failure_exit_2(tmp_path, monkeypatch):
    from bsde_stab.errors import RootBracketFailure

    def boom(*args, **kwargs):
        raise RootBracketFailure("no sign change")

    monkeypatch.setattr(cli, "vn_region_table", boom)
    code, _, err = run(["vn-region", "--out", str(tmp_path / "v.csv")])
    assert code == 2 and "numerical failure" in err


def test_report_number_format():
    assert report.fmt(0.1) == "0.1"
    assert report.fmt(7) == "7"
    assert report.fmt(math.nan) == "nan"
    x = 1 / 3
    assert float(report.fmt(x)) == x
    study = convergence_study(1, 1, 10, 1, [16, 32])
    text = report.convergence_csv(study)
    assert text.splitlines()[0] == ",".join(report.CONVERGE_HEADER)
