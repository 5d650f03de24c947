import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from qsilo.cli import main, profile_sup_difference
from qsilo.io import fmt, read_csv

GOLDEN = Path(__file__).parent / "golden"

SIM_ARGS = ["simulate", "--n", "4", "--dist", "uniform", "--seed", "11", "--burn-in", "50",
            "--samples", "200", "--thin", "2", "--window", "-1"]
MOM_ARGS = ["moments", "--n", "5", "--alpha", "0.5", "--solver", "fixed-point"]


def run(args, out=None, env=None):
    cmd = [sys.executable, "-m", "qsilo", *args]
    if out is not None:
        cmd += ["--out", str(out)]
    e = dict(os.environ, **(env or {}))
    return subprocess.run(cmd, capture_output=True, text=True, env=e, timeout=300)


def csv_files(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).glob("*.csv"))}


def test_missing_n_is_config_error():
    r = run(["simulate"])
    assert r.returncode == 1
    assert "usage:" in r.stderr and "--n" in r.stderr


@pytest.mark.parametrize("args", [
    ["simulate", "--n", "4", "--r", "1.5"],
    ["simulate", "--n", "0"],
    ["simulate", "--n", "4", "--samples", "-3"],
    ["simulate", "--n", "4", "--dist", "cauchy"],
    ["moments", "--n", "10", "--solver", "multigrid"],
    ["moments", "--n", "1000", "--solver", "direct"],
    ["figures", "--fig", "4"],
    ["figures", "--fig", "2", "--n-list", "100"],
    ["walk", "--n", "4"],
    ["ism", "--l", "7"],
    ["bogus"],
])
def test_config_errors_exit_1(args, tmp_path):
    r = run(args, tmp_path)
    assert r.returncode == 1, r.stderr


def test_moments_closed_form(tmp_path):
    r = run(["moments", "--n", "1", "--alpha", "1", "--solver", "direct"], tmp_path)
    assert r.returncode == 0
    header, rows = read_csv(tmp_path / "moments_direct.csv")
    assert header == ["N", "alpha", "i", "j", "sigma", "R"]
    assert rows == [["1", "1", "1", "1", "1", "-1"]]  # K(1) = -1
    text = (tmp_path / "moments_direct.csv").read_text()
    assert "# residual" in text and text.rstrip().splitlines()[-1] == "# manifest: moments.manifest.json"


def test_moments_agreement_row(tmp_path):
    assert main(["moments", "--n", "15", "--solver", "direct", "--solver", "multigrid", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "agreement.csv")
    assert header == ["N", "solver_a", "solver_b", "max_abs_diff_r"]
    assert rows[0][:3] == ["15", "direct", "multigrid"] and float(rows[0][3]) < 1e-10


def test_moments_multigrid_511(tmp_path):
    assert main(["moments", "--n", "511", "--solver", "multigrid", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "moments_multigrid.csv").read_text()
    res = float(next(ln for ln in text.splitlines() if ln.startswith("# residual")).split()[-1])
    assert res <= 1e-12


def test_simulate_outputs_and_manifest(tmp_path):
    r = run(SIM_ARGS, tmp_path)
    assert r.returncode in (0, 2)
    for name in ("sites.csv", "pairs.csv", "gamma.csv", "simulate_tests.csv"):
        lines = (tmp_path / name).read_text().splitlines()
        assert not lines[0].startswith("#")
        assert lines[-1] == "# manifest: simulate.manifest.json"
    man = json.loads((tmp_path / "simulate.manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 11
    assert sorted(man["outputs"]) == sorted(csv_files(tmp_path))
    assert {"started", "finished", "version", "params"} <= set(man)
    header, rows = read_csv(tmp_path / "gamma.csv")
    assert header == ["N", "r", "ks_stat", "p", "mean", "var"]


def test_simulate_gamma_beta_comment(tmp_path):
    main(["simulate", "--n", "16", "--samples", "200", "--burn-in", "100", "--out", str(tmp_path)])
    assert "beta 8.0" in (tmp_path / "gamma.csv").read_text()


def test_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(SIM_ARGS, a).returncode == run(SIM_ARGS, b).returncode
    assert csv_files(a) == csv_files(b)


def test_golden_files(tmp_path):
    run(SIM_ARGS, tmp_path / "sim")
    run(MOM_ARGS, tmp_path / "mom")
    for sub, names in (("sim", ("sites.csv", "pairs.csv")), ("mom", ("moments_fixed-point.csv",))):
        for n in names:
            assert (tmp_path / sub / n).read_bytes() == (GOLDEN / n).read_bytes(), n


def test_env_out_dir(tmp_path):
    r = run(["moments", "--n", "2"], env={"QSILO_OUT": str(tmp_path)})
    assert r.returncode == 0
    assert (tmp_path / "moments_direct.csv").exists()


def test_walk_command(tmp_path):
    r = run(["walk", "--n", "3", "--samples", "100000"], tmp_path)
    assert r.returncode == 0, r.stdout + r.stderr
    header, rows = read_csv(tmp_path / "walk_bound.csv")
    assert header == ["i", "j", "estimate", "stderr", "n_samples", "truncated_fraction"]
    assert abs(float(rows[0][2]) - 42.0) < 3 * float(rows[0][3])


def test_ism_command(tmp_path):
    assert main(["ism", "--l", "64", "--steps", "200", "--samples", "300", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "ism_tests.csv")
    assert header == ["test_name", "statistic", "p_value", "pass"]
    assert all(r[3] == "1" for r in rows)


def test_statistical_failure_exit_2(tmp_path):
    # N = 2 is far from the scaling regime, so the Gamma fit must fail
    r = run(["simulate", "--n", "2", "--dist", "const", "--seed", "7", "--samples", "5000"], tmp_path)
    assert r.returncode == 2
    header, rows = read_csv(tmp_path / "sites.csv")
    assert abs(float(rows[0][2]) - 0.5) < 0.05
    tests = dict((row[0], row[3]) for row in read_csv(tmp_path / "simulate_tests.csv")[1])
    assert tests == {"mass_balance": "1", "gamma_fit": "0"}


def test_figures(tmp_path):
    assert main(["figures", "--fig", "1", "--n-list", "15", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "fig1_surface.csv")
    assert header == ["N", "i", "j", "r"] and len(rows) == 17 * 17
    assert all(float(r[3]) == 0.0 for r in rows if r[1] in ("0", "16") or r[2] in ("0", "16"))
    assert main(["figures", "--fig", "3", "--n-list", "15,31,63", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "fig3_corner.csv")
    assert [r[0] for r in rows] == ["4", "5", "6"]
    vals = [float(r[1]) for r in rows]
    assert vals == sorted(vals, reverse=True)
    assert main(["figures", "--fig", "2", "--n-list", "31,63", "--out", str(tmp_path)]) == 0
    assert "sup_diff N=31 N=63" in (tmp_path / "fig2_diagonal.csv").read_text()


def test_fmt_precision():
    assert fmt(0.1) == "0.10000000000000001"
    assert float(fmt(1 / 3)) == 1 / 3
    assert fmt(3) == "3" and fmt(True) == "1" and fmt(float("nan")) == "nan"


def test_profile_sup_difference_nested_grids():
    import numpy as np

    x1 = np.linspace(0, 1, 5)
    x2 = np.linspace(0, 1, 9)
    assert profile_sup_difference((x1, x1**2), (x2, x2**2)) == 0.0
