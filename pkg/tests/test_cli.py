"""CLI flows, exit codes, serialization round-trips."""

import csv
import json

import numpy as np

from movetarget import build_market, equilibrium_residual, solve_cubic_coeffs
from movetarget.cli import main
from movetarget.io import read_coefficient_curves, write_coefficient_curves


def _write_config(path, **overrides):
    cfg = {
        "market": {
            "dim": 1,
            "horizon": 1.0,
            "grid": {"n_steps": 128},
            "r": 0.05,
            "mu_x": 0.09,
            "sigma": 0.2,
            "mu": 0.03,
        },
        "utility": "cubic",
        "x0": 50.0,
        "seed": 3,
        "paths": 4000,
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return cfg


def test_solve_writes_csv_and_sidecar(tmp_path):
    cfgf = tmp_path / "run.json"
    _write_config(cfgf)
    out = tmp_path / "out"
    assert main(["solve", "--config", str(cfgf), "--utility", "cubic", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "coeffs.csv").open()))
    assert rows[0]["s"] == "0"
    assert abs(float(rows[-1]["M"]) - 1.0) < 1e-15
    assert (out / "run_config.json").exists()


def test_solve_quadratic_lambda_eq_r_zero_alpha(tmp_path):
    cfgf = tmp_path / "run.json"
    _write_config(
        cfgf,
        utility="quadratic",
        market={
            "dim": 1, "horizon": 1.0, "grid": {"n_steps": 128},
            "r": 0.05, "mu_x": 0.09, "sigma": 0.2, "mu": 0.05,
        },
        **{"lambda": 0.05},
    )
    out = tmp_path / "out"
    assert main(["solve", "--config", str(cfgf), "--utility", "quadratic", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "coeffs.csv").open()))
    assert max(abs(float(r["alpha_1"])) for r in rows) < 1e-10
    assert all(r["lambda"] == "0.050000000000000003" for r in rows)


def test_lambda_subcommand_success(tmp_path):
    cfgf = tmp_path / "run.json"
    _write_config(
        cfgf,
        market={
            "dim": 1, "horizon": 1.0, "grid": {"n_steps": 256},
            "r": 0.03, "mu_x": 0.07, "sigma": 0.2,
            "mu": {"grid": [0.0, 1.0], "values": [0.05, 0.03]},
        },
    )
    out = tmp_path / "out"
    assert main(["lambda", "--config", str(cfgf), "--out", str(out)]) == 0
    assert (out / "lambda.csv").exists()
    assert (out / "coeffs.csv").exists()


def test_lambda_subcommand_terminal_mismatch(tmp_path, capsys):
    cfgf = tmp_path / "run.json"
    _write_config(
        cfgf,
        market={
            "dim": 1, "horizon": 1.0, "grid": {"n_steps": 64},
            "r": 0.03, "mu_x": 0.07, "sigma": 0.2, "mu": 0.05,
        },
    )
    out = tmp_path / "out"
    assert main(["lambda", "--config", str(cfgf), "--out", str(out)]) == 2
    diag = json.loads((out / "lambda_diagnostic.json").read_text())
    assert diag["error"] == "NoSolution"
    assert "mu(T)" in diag["detail"]


def test_simulate_and_report(tmp_path):
    cfgf = tmp_path / "run.json"
    _write_config(cfgf)
    out = tmp_path / "sim"
    rc = main([
        "simulate", "--config", str(cfgf), "--paths", "200", "--steps", "16",
        "--seed", "5", "--scheme", "exact", "--out", str(out),
    ])
    assert rc == 0
    summ = json.loads((out / "summary.json").read_text())
    assert summ["n_paths"] == 200
    rows = list(csv.DictReader((out / "ensemble.csv").open()))
    assert len(rows) == 200 * 17
    rc = main(["report", "--in", str(out), "--out", str(tmp_path / "rep")])
    assert rc == 0
    assert (tmp_path / "rep" / "report.txt").exists()


def test_verify_exit_codes(tmp_path):
    cfgf = tmp_path / "run.json"
    _write_config(cfgf, paths=3000)
    assert main(["verify", "--config", str(cfgf), "--out", str(tmp_path / "v0")]) == 0

    # mu(T) != r(T): quadratic multiplier does not exist -> solver error
    _write_config(
        cfgf,
        utility="quadratic",
        market={
            "dim": 1, "horizon": 1.0, "grid": {"n_steps": 64},
            "r": 0.03, "mu_x": 0.07, "sigma": 0.2, "mu": 0.05,
        },
    )
    assert main(["verify", "--config", str(cfgf), "--out", str(tmp_path / "v1")]) == 2

    # x^- with mu > r and x0 > 0 -> FAIL verdict
    _write_config(
        cfgf,
        utility="negative_part",
        x0=1.0,
        market={
            "dim": 1, "horizon": 1.0, "grid": {"n_steps": 64},
            "r": 0.05, "mu_x": 0.09, "sigma": 0.2, "mu": 0.07,
        },
    )
    assert main(["verify", "--config", str(cfgf), "--out", str(tmp_path / "v2")]) == 3
    rep = json.loads((tmp_path / "v2" / "report.json").read_text())
    assert rep["verdict"] == "FAIL"
    assert rep["reasons"][0]["code"] == "NEGATIVE_PART_FAILS"


def test_bad_config_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad), "--utility", "cubic"]) == 1
    missing = tmp_path / "missing.json"
    missing.write_text(json.dumps({"market": {"dim": 1, "horizon": 1.0}}))
    assert main(["solve", "--config", str(missing), "--utility", "cubic"]) == 1


def test_csv_round_trip_identical_residuals(tmp_path, cubic_market):
    curves = solve_cubic_coeffs(cubic_market)
    path = tmp_path / "coeffs.csv"
    write_coefficient_curves(curves, cubic_market, path)
    back = read_coefficient_curves(path, cubic_market)
    r1 = equilibrium_residual(curves, cubic_market).curve.values
    r2 = equilibrium_residual(back, cubic_market).curve.values
    assert np.array_equal(r1, r2)
    assert np.array_equal(back.M.values, curves.M.values)
    assert np.array_equal(back.alpha.values, curves.alpha.values)


def test_round_trip_through_cli_verify(tmp_path):
    cfgf = tmp_path / "run.json"
    _write_config(cfgf, paths=3000)
    out = tmp_path / "solved"
    assert main(["solve", "--config", str(cfgf), "--utility", "cubic", "--out", str(out)]) == 0
    v = tmp_path / "verified"
    rc = main([
        "verify", "--config", str(cfgf), "--curves", str(out / "coeffs.csv"),
        "--out", str(v),
    ])
    assert rc == 0
    rep = json.loads((v / "report.json").read_text())
    in_process = run_residual_sup(cfgf)
    assert rep["residual_sup"] == in_process


def run_residual_sup(cfgf):
    cfg = json.loads(cfgf.read_text())
    market = build_market(cfg["market"])
    curves = solve_cubic_coeffs(market)
    return equilibrium_residual(curves, market).sup


def test_report_renders_figures(tmp_path):
    cfgf = tmp_path / "run.json"
    _write_config(cfgf, paths=3000)
    out = tmp_path / "v"
    assert main(["verify", "--config", str(cfgf), "--out", str(out)]) == 0
    assert main(["solve", "--config", str(cfgf), "--utility", "cubic", "--out", str(out)]) == 0
    rep = tmp_path / "rep"
    assert main(["report", "--in", str(out), "--out", str(rep)]) == 0
    for name in ("report.txt", "curves_plot.csv", "slopes_plot.csv", "gain.png",
                 "residual.png", "slopes.png"):
        assert (rep / name).exists(), name
    rep2 = tmp_path / "rep2"
    assert main(["report", "--in", str(out), "--out", str(rep2), "--no-figures"]) == 0
    assert not (rep2 / "gain.png").exists()
    assert (rep2 / "curves_plot.csv").exists()


def test_report_renders_negative_part_verdict(tmp_path):
    cfgf = tmp_path / "run.json"
    _write_config(
        cfgf,
        utility="negative_part",
        x0=1.0,
        paths=1000,
        market={
            "dim": 1, "horizon": 1.0, "grid": {"n_steps": 64},
            "r": 0.05, "mu_x": 0.09, "sigma": 0.2, "mu": 0.03,
        },
    )
    out = tmp_path / "v"
    assert main(["verify", "--config", str(cfgf), "--out", str(out)]) == 0
    assert main(["report", "--in", str(out), "--no-figures"]) == 0
    text = (out / "report.txt").read_text()
    assert "HOLDS" in text and "PASS" in text


def test_env_var_default_out(tmp_path, monkeypatch):
    cfgf = tmp_path / "run.json"
    _write_config(cfgf)
    monkeypatch.setenv("MOVETARGET_OUT", str(tmp_path / "envout"))
    monkeypatch.chdir(tmp_path)
    assert main(["solve", "--config", str(cfgf), "--utility", "cubic"]) == 0
    assert (tmp_path / "envout" / "coeffs.csv").exists()
