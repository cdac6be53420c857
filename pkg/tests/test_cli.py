import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest

from perwave.applications import toy_model
from perwave.cli import _join_negative_values, execute
from perwave.grid import Grid, constant_state, sample
from perwave.io import read_csv, read_json, read_profile, write_profile


def test_list_models_prints_four(capsys):
    assert execute(["list-models"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    assert sorted(l.split()[0] for l in lines) == ["gp_real", "gp_scalar", "klausmeier", "toy_rde"]


def test_console_script_runs():
    exe = shutil.which("perwave")
    cmd = [exe] if exe else [sys.executable, "-m", "perwave.cli"]
    out = subprocess.run(cmd + ["list-models"], capture_output=True, text=True, check=True)
    assert "toy_rde" in out.stdout


def test_usage_errors_exit_two(capsys):
    assert execute(["frobnicate"]) == 2
    assert execute([]) == 2
    assert execute(["spectrum", "ess"]) == 2
    assert execute(["oracle", "eig", "--profile", "x.csv", "--window", "1,2", "--out", "o"]) == 2
    capsys.readouterr()


def test_domain_errors_exit_one(tmp_path, capsys):
    state = constant_state([0.0], 2.0, 64)
    write_profile(tmp_path / "zero.csv", state, toy_model(0.0))
    code = execute(["spectrum", "edge", "--state", str(tmp_path / "zero.csv"),
                    "--inside", "0", "--outside", "1", "--out", str(tmp_path / "e.json")])
    assert code == 1
    assert "NonHyperbolic" in capsys.readouterr().err
    assert execute(["oracle", "eig", "--profile", str(tmp_path / "missing.csv"),
                    "--out", str(tmp_path / "o.csv")]) == 1


def test_negative_values_are_joined():
    argv = ["oracle", "eig", "--window", "-1,1,-1,1", "--center", "-0.2", "--out", "-x"]
    assert _join_negative_values(argv) == ["oracle", "eig", "--window=-1,1,-1,1", "--center=-0.2",
                                           "--out", "-x"]


def test_spectrum_edge_and_grid(tmp_path, capsys):
    write_profile(tmp_path / "zero.csv", constant_state([0.0], 2.0, 64), toy_model(0.0))
    assert execute(["spectrum", "edge", "--state", str(tmp_path / "zero.csv"),
                    "--out", str(tmp_path / "edge.json")]) == 0
    assert read_json(tmp_path / "edge.json")["edge"] == pytest.approx(-1.0, abs=1e-8)
    assert execute(["spectrum", "ess", "--state", str(tmp_path / "zero.csv"), "--no-plots",
                    "--lambda-grid", "-3,1,-0.5,0.5,9,3", "--out", str(tmp_path / "ess.csv")]) == 0
    header, data = read_csv(tmp_path / "ess.csv")
    col = {h: i for i, h in enumerate(header)}
    expected = (data[:, col["im"]] == 0) & (data[:, col["re"]] <= -1.0)
    assert np.array_equal(data[:, col["in_spectrum"]].astype(bool), expected)
    assert np.all(np.isnan(data[expected, col["fredholm_index"]]))
    capsys.readouterr()


def test_solve_then_oracle_and_evans(tmp_path, capsys):
    g = Grid.line(-12.0, 12.0, h=0.05)
    guess = sample(g, lambda x: 4 * np.arctan(np.exp(x)) + 0.05 * np.exp(-x**2))
    write_profile(tmp_path / "guess.csv", guess, toy_model(0.0))
    # the eps = 0 front is translation invariant; its Newton floor sits just above 1e-10
    assert execute(["solve", "--guess", str(tmp_path / "guess.csv"), "--no-plots", "--tol", "1e-9",
                    "--out", str(tmp_path / "front.csv")]) == 0
    front, model = read_profile(tmp_path / "front.csv")
    assert model.name == "toy_rde" and front.asymptotics is not None
    assert execute(["oracle", "eig", "--profile", str(tmp_path / "front.csv"),
                    "--window", "-0.5,0.5,-0.5,0.5", "--out", str(tmp_path / "eig.csv")]) == 0
    _, eig = read_csv(tmp_path / "eig.csv")
    assert len(eig) == 1 and abs(eig[0, 0]) < 1e-3
    assert execute(["evans", "count", "--profile", str(tmp_path / "front.csv"), "--radius", "0.5",
                    "--out", str(tmp_path / "count.json")]) == 0
    assert read_json(tmp_path / "count.json")["winding"] == 1
    capsys.readouterr()


def test_reproduce_is_deterministic(tmp_path, capsys):
    runs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert execute(["reproduce", "klausmeier-2pulse", "--quick", "--out-dir", str(out)]) == 0
        runs.append(out)
    capsys.readouterr()
    manifest = read_json(runs[0] / "manifest.json")
    listed = {f["path"] for f in manifest["files"]}
    assert listed and all((runs[0] / name).exists() for name in listed)
    csvs = sorted(p.name for p in runs[0].glob("*.csv"))
    assert csvs and set(csvs) <= listed
    for name in csvs:
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()
    other = read_json(runs[1] / "manifest.json")
    manifest.pop("timestamp")
    other.pop("timestamp")
    assert manifest == other


def test_reproduce_unknown_recipe(tmp_path, capsys):
    assert execute(["reproduce", "nope", "--out-dir", str(tmp_path)]) in (1, 2)
    assert execute(["reproduce", "list"]) == 0
    assert "toy-2front-spectrum" in capsys.readouterr().out
