import json
import math
import os
import subprocess
import sys

import pytest

from twoscale import cli
from twoscale.errors import ConfigurationError, SolverError


def _write(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


LAYERED = {"coefficients": {"preset": "layered"}, "grids": {"n": 64, "m": 64},
           "study": {"deltas": [0.25, 0.125]}}


def test_effective_writes_report(in_tmp):
    cfg = _write(in_tmp / "layered.json", LAYERED)
    assert cli.main(["effective", "--config", cfg, "--out", "r", "--quiet"]) == 0
    data = json.loads((in_tmp / "r" / "effective.json").read_text())
    A = data["samples"][0]
    assert A["A11"] == pytest.approx(math.sqrt(3), abs=1e-3) and A["A22"] == pytest.approx(2.0)
    assert data["ellipticity"]["passed"]
    assert (in_tmp / "r" / "effective.csv").exists()
    assert sorted(os.listdir(in_tmp)) == ["layered.json", "r"]


def test_diagnostics_constant(in_tmp, capsys):
    cfg = _write(in_tmp / "constant.json", {"coefficients": {"preset": "constant"},
                                            "study": {"samples": 50}})
    assert cli.main(["diagnostics", "--config", cfg]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["beta0"] == 0 and data["sector_sampled"] <= 1 + 1e-8
    assert data["unit_contraction"]["status"] == "ok"  # zero drift satisfies the sign condition
    assert os.listdir(in_tmp) == ["constant.json"]


def test_lambda_below_index_exit_1(in_tmp, capsys):
    cfg = _write(in_tmp / "bad.json", {"coefficients": {"preset": "bounded-drift"},
                                       "solver": {"lam": 0.5}, **{"grids": {"n": 64, "m": 16}}})
    assert cli.main(["convergence", "--config", cfg, "--out", "r"]) == 1
    err = capsys.readouterr().err
    assert "lambda=0.5" in err and "beta0=" in err
    assert not list((in_tmp / "r").iterdir())


@pytest.mark.parametrize("cfg", [
    {"bogus": 1},
    {"grids": {"n": 1}},
    {"grids": {"n": 32}, "study": {"deltas": [0.125]}},
    {"coefficients": {"preset": "nope"}},
    {"study": {"deltas": []}},
])
def test_invalid_configs_exit_1(in_tmp, cfg, capsys):
    path = _write(in_tmp / "c.json", cfg)
    assert cli.main(["convergence", "--config", path, "--quiet"]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_missing_and_malformed_config(in_tmp):
    assert cli.main(["effective", "--config", "missing.json"]) == 1
    (in_tmp / "x.json").write_text("{not json")
    assert cli.main(["effective", "--config", "x.json"]) == 1


def test_argparse_errors_exit_1():
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["effective", "--nope"])
    assert info.value.code == 1


def test_solver_failure_exit_2(monkeypatch, capsys):
    def fail(cfg, args, out):
        raise SolverError("residual stalled", [1.0])

    monkeypatch.setitem(cli.COMMANDS, "solve", fail)
    assert cli.main(["solve"]) == 2
    assert "failure:" in capsys.readouterr().err


def test_convergence_outputs_and_round_trip(in_tmp):
    cfg = _write(in_tmp / "c.json", {**LAYERED, "grids": {"n": 64, "m": 16}})
    assert cli.main(["convergence", "--config", cfg, "--out", "r", "--quiet", "--threads", "2"]) == 0
    out = in_tmp / "r"
    assert sorted(os.listdir(out)) == ["convergence.csv", "convergence.json", "convergence.svg"]
    data = json.loads((out / "convergence.json").read_text())
    assert cli.load_config(data["config"]) == cli.load_config(cfg)
    assert len(data["rows"]) == 2 and "timing" in data
    assert (out / "convergence.svg").read_text().startswith("<svg")


def test_seed_override_and_quiet(in_tmp, capsys):
    assert cli.main(["unfold-check", "--seed", "7", "--quiet"]) == 0
    assert capsys.readouterr().out == ""


@pytest.mark.parametrize("cmd,files", [
    ("correctors", {"correctors.json", "correctors.csv"}),
    ("solve", {"solve.json", "solution.csv"}),
    ("resolvent", {"resolvent.json", "resolvent.csv", "resolvent.svg"}),
    ("unfold-check", {"unfold.json", "unfold.csv"}),
])
def test_each_subcommand_writes(in_tmp, cmd, files):
    cfg = _write(in_tmp / "c.json", {**LAYERED, "grids": {"n": 64, "m": 16}})
    assert cli.main([cmd, "--config", cfg, "--out", "o", "--quiet"]) == 0
    assert set(os.listdir(in_tmp / "o")) == files


def test_unfold_check_is_exact_when_aligned(in_tmp):
    assert cli.main(["unfold-check", "--out", "o", "--quiet"]) == 0
    rows = json.loads((in_tmp / "o" / "unfold.json").read_text())["rows"]
    for r in rows:
        assert r["aligned"] and r["identity_residual"] <= 1e-12
        assert r["multiplicativity_error"] == 0.0 and r["contraction_excess"] <= 1e-10


def test_load_config_defaults():
    cfg = cli.load_config()
    assert cfg["grids"]["n"] == 64 and cfg["solver"]["lam"] == "auto"
    with pytest.raises(ConfigurationError):
        cli.load_config({"grids": {"q": 1}})


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "twoscale", "--help"], capture_output=True,
                       text=True, cwd=tmp_path)
    assert r.returncode == 0 and "unfold-check" in r.stdout and "HOM_LOG" in r.stdout
    assert os.listdir(tmp_path) == []
