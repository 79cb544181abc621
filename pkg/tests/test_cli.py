import json
import subprocess
import sys

import numpy as np
import pytest

from singlepixel.cli import main
from singlepixel.forward import MeasurementSet
from singlepixel.io import read_grid
from singlepixel.phantom import PRESETS, voxelize

SMALL = ["--set", "grid.n=6", "--set", "sources.count=24", "--set", "detector.rays_per_axis=4", "--set", "solver.max_iters=15"]


def run(*args):
    return main([str(a) for a in args])


def test_phantom_presets(tmp_path):
    for name, pairs in [("two-shell", [[0.4, 0.8], [0.8, 0.4]]), ("sphere", [[0.8, 0.8]]), ("three-shell", [[0.4, 0.8], [0.6, 0.4], [0.8, 0.2]])]:
        out = tmp_path / name
        assert run("phantom", "--out", out, "--set", f"phantom={name}", "--set", "grid.n=8") == 0
        np.testing.assert_array_equal(read_grid(out / "phantom_grid.txt"), voxelize(PRESETS[name], 8))
        echo = json.loads((out / "config.json").read_text())
        assert echo["phantom"] == name and echo["grid"]["n"] == 8
        assert PRESETS[name].to_pairs() == pairs


def test_simulate_count_and_determinism(tmp_path):
    a = tmp_path / "a"
    first = {}
    for _ in range(2):
        assert run("simulate", "--out", a, "--seed", 42, "--set", "grid.n=8") == 0
        for f in ("measurements.csv", "config.json"):
            data = (a / f).read_bytes()
            assert first.setdefault(f, data) == data
    m = MeasurementSet.read_csv(a / "measurements.csv")
    assert len(m) == 1030
    assert not np.array_equal(m.clean, m.noisy)


def test_simulate_noiseless(tmp_path):
    assert run("simulate", "--out", tmp_path, "--set", "noise_level=0", *SMALL) == 0
    m = MeasurementSet.read_csv(tmp_path / "measurements.csv")
    assert m.clean.tobytes() == m.noisy.tobytes()


def test_reconstruct_outputs_and_determinism(tmp_path):
    assert run("simulate", "--out", tmp_path / "sim", *SMALL) == 0
    first = {}
    for _ in range(2):
        assert run("reconstruct", tmp_path / "sim" / "measurements.csv", "--out", tmp_path / "r1", *SMALL) == 0
        for f in ("profile.csv", "history.csv", "grid.txt", "config.json"):
            data = (tmp_path / "r1" / f).read_bytes()
            assert first.setdefault(f, data) == data
    hist = (tmp_path / "r1" / "history.csv").read_text().splitlines()
    assert hist[0] == "iter,J,F,G,step_norm" and len(hist) == 17
    assert read_grid(tmp_path / "r1" / "grid.txt").shape == (6, 6, 6)


def test_reconstruct_defaults_to_measurements_in_out(tmp_path):
    assert run("simulate", "--out", tmp_path, *SMALL) == 0
    assert run("reconstruct", "--out", tmp_path, *SMALL) == 0
    assert (tmp_path / "profile.csv").exists()


def test_reconstruct_geometry_mismatch(tmp_path):
    assert run("simulate", "--out", tmp_path / "sim", *SMALL) == 0
    meas = tmp_path / "sim" / "measurements.csv"
    assert run("reconstruct", meas, "--out", tmp_path / "r", *SMALL, "--set", "sources.count=25") == 3
    # without the echo, the positions themselves are checked
    (tmp_path / "sim" / "config.json").unlink()
    assert run("reconstruct", meas, "--out", tmp_path / "r", *SMALL, "--set", "sources.radius=3.5") == 3
    assert run("reconstruct", tmp_path / "missing.csv", "--out", tmp_path / "r", *SMALL) == 3


def test_config_errors(tmp_path, capsys):
    assert run("simulate", "--out", tmp_path, "--set", "solver.gamma=0") == 2
    assert run("simulate", "--out", tmp_path, "--set", "nope=1") == 2
    assert run("simulate", "--out", tmp_path, "--set", "detector.side=4") == 2
    assert run("simulate", "--out", tmp_path, "--config", tmp_path / "absent.yaml") == 2
    assert run("simulate", "--out", tmp_path, "--threads", 0) == 2
    assert "config error" in capsys.readouterr().err


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    from singlepixel import cli
    from singlepixel.solver import SolverError

    def boom(*a, **k):
        raise SolverError("non-finite")

    assert run("simulate", "--out", tmp_path, *SMALL) == 0
    monkeypatch.setattr(cli, "run_dr", boom)
    assert run("reconstruct", "--out", tmp_path, *SMALL) == 4


def test_config_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("schema_version: 1\nphantom: sphere\ngrid: {n: 5}\nsources: {count: 10}\ndetector: {rays_per_axis: 3}\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 0
    echo = json.loads((tmp_path / "o" / "config.json").read_text())
    assert echo["phantom"] == "sphere" and echo["sources"]["count"] == 10
    assert echo["solver"]["inner"]["memory"] == 10  # defaults materialized
    assert "geometry_digest" in echo
    # the echo alone reproduces the run
    echo.pop("geometry_digest")
    (tmp_path / "echo.json").write_text(json.dumps(echo))
    assert run("simulate", "--config", tmp_path / "echo.json", "--out", tmp_path / "o2") == 0
    assert (tmp_path / "o" / "measurements.csv").read_bytes() == (tmp_path / "o2" / "measurements.csv").read_bytes()


def test_evaluate(tmp_path):
    assert run("phantom", "--out", tmp_path, "--set", "grid.n=20") == 0
    g = tmp_path / "phantom_grid.txt"
    assert run("evaluate", g, g, "--out", tmp_path / "e1") == 0
    rep = json.loads((tmp_path / "e1" / "metrics.json").read_text())
    assert rep["ssim"] == 1.0 and rep["rmse"] == 0.0
    assert rep["ssim_params"] == {"k1": 0.01, "k2": 0.03, "data_range": 0.8, "window": 7, "sigma": 1.5}
    assert len(rep["reference"]["sha256"]) == 64
    zero = tmp_path / "zero.txt"
    zero.write_text("n=20\n" + " ".join(["0"] * 8000) + "\n")
    assert run("evaluate", g, zero, "--out", tmp_path / "e2") == 0
    assert json.loads((tmp_path / "e2" / "metrics.json").read_text())["ssim"] < 0.5
    small = tmp_path / "small.txt"
    small.write_text("n=2\n" + " ".join(["0"] * 8) + "\n")
    assert run("evaluate", g, small, "--out", tmp_path / "e3") == 3


def test_verify(tmp_path, capsys):
    assert run("simulate", "--out", tmp_path / "t", *SMALL) == 0
    m = tmp_path / "t" / "measurements.csv"
    assert run("verify", m, m, "--out", tmp_path / "v", "--tol", 0) == 0
    rep = json.loads((tmp_path / "v" / "verdict.json").read_text())
    assert rep["accept"] is True and rep["max_deviation"] == 0.0
    assert run("simulate", "--out", tmp_path / "h", *SMALL, "--set", "phantom={shells: [[0.4, 0.0], [0.8, 0.4]]}") == 0
    h = tmp_path / "h" / "measurements.csv"
    assert run("verify", m, h, "--out", tmp_path / "v2", "--tol", 1e-4) == 0
    assert json.loads((tmp_path / "v2" / "verdict.json").read_text())["accept"] is False
    assert run("verify", m, h, "--out", tmp_path / "v3", "--tol", "inf") == 0
    rep = json.loads((tmp_path / "v3" / "verdict.json").read_text())
    assert rep["accept"] is True and rep["tol"] == "inf"
    assert capsys.readouterr().out.split() == ["accept", "reject", "accept"]
    assert run("simulate", "--out", tmp_path / "o", *SMALL, "--set", "sources.count=20") == 0
    assert run("verify", m, tmp_path / "o" / "measurements.csv", "--out", tmp_path / "v4") == 3


def test_sweep_cardinality_and_composition(tmp_path):
    assert run("sweep", "--out", tmp_path / "s", "--noise", "0.005,0.01,0.02", "--alpha", "0.01,0.03,0.1", "--threads", 1, *SMALL) == 0
    rows = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    assert rows[0] == "noise,alpha,ssim,rmse" and len(rows) == 10
    assert rows[1].startswith("0.005,0.01,")
    # a single cell equals simulate -> reconstruct -> evaluate
    one = ["--set", "noise_level=0.01", "--set", "solver.alpha=0.03", *SMALL]
    assert run("sweep", "--out", tmp_path / "c", "--noise", "0.01", "--alpha", "0.03", "--threads", 1, *SMALL) == 0
    assert run("simulate", "--out", tmp_path / "p", *one) == 0
    assert run("reconstruct", "--out", tmp_path / "p", *one) == 0
    assert run("phantom", "--out", tmp_path / "p", *one) == 0
    assert run("evaluate", tmp_path / "p" / "phantom_grid.txt", tmp_path / "p" / "grid.txt", "--out", tmp_path / "p") == 0
    rep = json.loads((tmp_path / "p" / "metrics.json").read_text())
    cell = (tmp_path / "c" / "sweep.csv").read_text().splitlines()[1].split(",")
    assert float(cell[2]) == rep["ssim"] and float(cell[3]) == rep["rmse"]
    cell_dir = tmp_path / "c" / "cells" / "noise=0.01_alpha=0.03"
    assert (cell_dir / "grid.txt").read_bytes() == (tmp_path / "p" / "grid.txt").read_bytes()


def test_sweep_worker_pool_matches_serial(tmp_path):
    args = ["--noise", "0.01,0.02", "--alpha", "0.1", *SMALL]
    assert run("sweep", "--out", tmp_path / "serial", "--threads", 1, *args) == 0
    assert run("sweep", "--out", tmp_path / "pool", "--threads", 2, *args) == 0
    assert (tmp_path / "serial" / "sweep.csv").read_bytes() == (tmp_path / "pool" / "sweep.csv").read_bytes()


def test_sweep_bad_list(tmp_path):
    assert run("sweep", "--out", tmp_path, "--noise", "a,b", *SMALL) == 2
    assert run("sweep", "--out", tmp_path, "--alpha", "-1", *SMALL) == 2


def test_console_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "singlepixel.cli", "simulate", "--out", str(tmp_path), "--set", "bogus=1"],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 2 and "unknown key" in res.stderr
