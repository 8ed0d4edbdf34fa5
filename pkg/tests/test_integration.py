import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from simplex_market.calibration import SECONDS_PER_YEAR
from simplex_market.cli import run

from . import fixtures
from .fixtures import TEST_DATA, params_file, polynomial_file, simulated_caps_csv

FAST = ["--paths", "40", "--T", "0.1", "--dt", "1e-3", "--threads", "2", "--seed", "5", "--quiet"]


def read_manifest(out: Path) -> dict:
    return json.loads((out / "manifest.json").read_text())


@pytest.mark.parametrize(
    "params_file", [f for f in fixtures.PARAM_FILES if f != "malformed_gamma.json"], indirect=True
)
def test_validate(params_file, tmp_path, caplog):
    caplog.set_level(logging.INFO)
    assert run(["validate", "--params", str(params_file), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "validation.json").read_text())["ok"]
    manifest = read_manifest(tmp_path)
    assert manifest["command"] == "validate"
    assert manifest["elapsed_seconds"] >= 0.0


@pytest.mark.parametrize("params_file", ["malformed_gamma.json"], indirect=True)
def test_validate_malformed(params_file, tmp_path, capsys):
    assert run(["validate", "--params", str(params_file), "--out", str(tmp_path)]) == 1
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ParameterValidationError"
    violations = json.loads((tmp_path / "validation.json").read_text())["violations"]
    assert {v["violation"] for v in violations} == {"GAMMA_NONZERO_DIAGONAL", "GAMMA_NOT_SYMMETRIC"}


@pytest.mark.parametrize(
    "params_file, expected",
    [("vsm_alpha05_d3.json", True), ("driftless_d3.json", False), ("attained_d3.json", False)],
    indirect=["params_file"],
)
def test_classify(params_file, expected, tmp_path):
    assert run(["classify", "--params", str(params_file), "--out", str(tmp_path)]) == 0
    result = json.loads((tmp_path / "classification.json").read_text())
    assert result["nupbr_and_arbitrage"] is expected
    assert result["excess_growth_lower_bound"] == pytest.approx(1.0)


@pytest.mark.parametrize(
    "params_file, polynomial_file",
    [("vsm_alpha0_d2.json", "x1_d2.json")],
    indirect=True,
)
def test_moments(params_file, polynomial_file, tmp_path):
    argv = ["moments", "--params", str(params_file), "--polynomial", str(polynomial_file), "--out", str(tmp_path)]
    assert run(argv + ["--mu0", "0.3,0.7", "--times", "0,1"]) == 0
    table = pd.read_csv(tmp_path / "moments.csv")
    assert table["moment"].tolist() == pytest.approx([0.3, 0.5 - 0.2 * math.exp(-1.0)], abs=1e-10)


@pytest.mark.parametrize("params_file", ["vsm_alpha05_d3.json"], indirect=True)
@pytest.mark.parametrize("model, columns", [("weights", 3), ("joint", 7), ("vsm-assets", 7)])
def test_simulate(params_file, model, columns, tmp_path):
    argv = ["simulate", "--params", str(params_file), "--out", str(tmp_path), "--model", model, "--stride", "10"]
    assert run(argv + FAST) == 0
    table = pd.read_csv(tmp_path / "paths.csv")
    assert len(table) == 40 * 11
    assert len(table.columns) == 3 + columns
    assert read_manifest(tmp_path)["config"]["seed"] == 5


@pytest.mark.parametrize("params_file", ["driftless_d3.json"], indirect=True)
def test_simulate_joint_needs_totalcap(params_file, tmp_path):
    argv = ["simulate", "--params", str(params_file), "--out", str(tmp_path), "--model", "joint"]
    assert run(argv + FAST) == 1


@pytest.mark.parametrize("params_file", ["vsm_alpha2_d3.json"], indirect=True)
def test_simulate_then_calibrate(params_file, tmp_path):
    sim_out, cal_out = tmp_path / "sim", tmp_path / "cal"
    argv = ["simulate", "--params", str(params_file), "--out", str(sim_out), "--paths", "1", "--T", "20"]
    assert run(argv + ["--dt", "1e-3", "--seed", "3", "--quiet"]) == 0
    assert run(["calibrate", "--data", str(sim_out / "paths.csv"), "--out", str(cal_out)]) == 0
    assert run(["validate", "--params", str(cal_out / "params.json"), "--out", str(cal_out)]) == 0
    params = json.loads((cal_out / "params.json").read_text())
    assert params["gamma"][0][1] == pytest.approx(1.0, rel=0.1)
    assert (cal_out / "params.stderr.json").exists()


def test_calibrate_csv(simulated_caps_csv, tmp_path):
    argv = ["calibrate", "--data", str(simulated_caps_csv), "--out", str(tmp_path)]
    assert run(argv + ["--time-scale", str(1 / SECONDS_PER_YEAR)]) == 0

    params = json.loads((tmp_path / "params.json").read_text())
    gamma, B, beta = np.array(params["gamma"]), np.array(params["B"]), np.array(params["beta"])
    assert gamma.shape == B.shape == (3, 3)
    np.testing.assert_array_equal(np.diag(gamma), 0.0)
    np.testing.assert_allclose(gamma, gamma.T)
    np.testing.assert_allclose(gamma[~np.eye(3, dtype=bool)], 1.0, rtol=0.1)
    assert np.all(beta >= 0.0)
    np.testing.assert_allclose(B.sum(axis=0), -beta.sum(), atol=1e-8)

    sidecar = json.loads((tmp_path / "params.stderr.json").read_text())
    assert sidecar["span"] == pytest.approx(20.0)
    assert np.all(np.array(sidecar["gamma_stderr"]) >= 0.0)
    assert len(sidecar["beta_stderr"]) == 3
    assert np.array(sidecar["drift_matrix"]).shape == (3, 3)
    assert read_manifest(tmp_path)["command"] == "calibrate"
    assert run(["validate", "--params", str(tmp_path / "params.json"), "--out", str(tmp_path)]) == 0


@pytest.mark.parametrize("params_file", ["vsm_alpha0_d2.json"], indirect=True)
def test_deflator(params_file, tmp_path):
    assert run(["deflator", "--params", str(params_file), "--out", str(tmp_path)] + FAST) == 0
    table = pd.read_csv(tmp_path / "deflator.csv")
    assert table["quantity"].tolist() == ["Z_T", "Z_T*mu_1", "Z_T*mu_2"]
    assert (table["n_used"] + table["n_dropped"] == 40).all()


@pytest.mark.parametrize("params_file", ["vsm_alpha0_d2.json"], indirect=True)
def test_arbitrage(params_file, tmp_path):
    argv = ["arbitrage", "--params", str(params_file), "--out", str(tmp_path), "--n-list", "1,2", "--per-path"]
    assert run(argv + FAST) == 0
    table = pd.read_csv(tmp_path / "arbitrage.csv")
    assert table["n"].tolist() == [1, 2]
    assert table["price"].is_monotonic_increasing
    assert len(pd.read_csv(tmp_path / "arbitrage_n2_paths.csv")) == 40


@pytest.mark.parametrize("params_file", ["driftless_d3.json"], indirect=True)
def test_arbitrage_without_arbitrage(params_file, tmp_path, capsys):
    assert run(["arbitrage", "--params", str(params_file), "--out", str(tmp_path)] + FAST) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "HypothesisError"


@pytest.mark.parametrize("params_file", ["vsm_alpha05_d3.json"], indirect=True)
def test_arbitrage_beyond_degree_cap(params_file, tmp_path, capsys):
    # three drifting faces: n = 17 asks for degree 51
    argv = ["arbitrage", "--params", str(params_file), "--out", str(tmp_path), "--n-list", "4,17"]
    assert run(argv + FAST) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "DegreeCapError"
    with pytest.raises(SystemExit):
        run(["arbitrage", "--help"])
    assert "rejected (not clipped)" in " ".join(capsys.readouterr().out.split())


def test_missing_file(tmp_path):
    assert run(["classify", "--params", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 3
    assert run(["calibrate", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 3


def test_environment_defaults(tmp_path, monkeypatch):
    monkeypatch.setenv("SIMPLEX_MARKET_PARAMS", str(TEST_DATA / "params" / "vsm_alpha0_d2.json"))
    monkeypatch.setenv("SIMPLEX_MARKET_QUIET", "0")
    assert run(["classify", "--out", str(tmp_path)]) == 0
    assert read_manifest(tmp_path)["config"]["quiet"] is False
