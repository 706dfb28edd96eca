"""Command-line front end: configs in, artifacts out, stable exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from ghmmkl.cli import main
from ghmmkl.models.discrete import FixedTableHmm
from ghmmkl.montecarlo import simulate


def _write_config(path, cfg):
    Path(path).write_text(json.dumps(cfg))


def _sweep_config():
    return {
        "command": "kl-sweep",
        "model": {"family": "tilt3"},
        "estimator": {
            "grid": [0.10, 0.125, 0.15, 0.175, 0.20],
            "n": 2000,
            "seed": 11,
            "n_reps": 3,
            "x0": 0,
            "burn_in": 0,
        },
    }


def _symbol_file(path, n=300, seed=2):
    gen = FixedTableHmm([[0.8, 0.2], [0.3, 0.7]], [[0.9, 0.1], [0.15, 0.85]])
    y = simulate(gen, np.zeros(0), n, seed=seed).y
    Path(path).write_text(
        "y\n" + "\n".join(str(int(v) + 1) for v in y) + "\n"
    )


def test_loglik_two_symbol_example(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    Path("obs.csv").write_text("y\n1\n2\n")
    _write_config("run.json", {
        "model": {"family": "tilt3"},
        "estimator": {"data": "obs.csv"},
    })
    assert main(["loglik", "--config", "run.json", "--out", "out"]) == 0
    payload = json.loads(Path("out/loglik.json").read_text())
    assert abs(payload["loglik"] + 1.3862943611198906) < 1e-12
    lines = Path("out/loglik.csv").read_text().splitlines()
    assert lines[0] == "t,loglik_inc,cumulative"
    assert len(lines) == 3
    assert (tmp_path / "out" / "run_meta.json").exists()


def test_invalid_garch_config_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    _write_config("run.json", {
        "model": {"family": "garch11", "delta": 0.1, "alpha": 0.3, "beta": 0.7},
        "estimator": {"n": 100, "seed": 1},
    })
    assert main(["simulate", "--config", "run.json", "--out", "out"]) == 2
    err = capsys.readouterr().err
    assert "model.beta" in err and "alpha + beta" in err


def test_kl_sweep_small_run_is_positive(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    _write_config("run.json", _sweep_config())
    assert main(["kl-sweep", "--config", "run.json", "--out", "out"]) == 0
    lines = Path("out/kl-sweep.csv").read_text().splitlines()
    assert lines[0] == "delta,K_hat,se,n,seed"
    assert len(lines) == 6
    for line in lines[1:]:
        assert float(line.split(",")[1]) > 0.0
    assert (tmp_path / "out" / "kl-sweep.png").exists()


def test_simulate_then_loglik_round_trip(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    _write_config("sim.json", {
        "model": {"family": "tilt3", "delta": 0.1},
        "estimator": {"n": 50, "seed": 7},
    })
    assert main(["simulate", "--config", "sim.json", "--out", "out"]) == 0
    lines = Path("out/simulate.csv").read_text().splitlines()
    assert lines[0] == "t,y,x"
    assert len(lines) == 51
    # symbols are written 1-based
    symbols = {int(line.split(",")[1]) for line in lines[1:]}
    assert symbols <= {1, 2}
    _write_config("ll.json", {
        "model": {"family": "tilt3", "delta": 0.1},
        "estimator": {"data": "out/simulate.csv"},
    })
    assert main(["loglik", "--config", "ll.json", "--out", "out2"]) == 0
    payload = json.loads(Path("out2/loglik.json").read_text())
    assert payload["n"] == 50
    assert np.isfinite(payload["loglik"]) and payload["loglik"] < 0.0


def test_rerun_writes_bit_identical_artifacts(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    _write_config("run.json", _sweep_config())
    assert main(["kl-sweep", "--config", "run.json", "--out", "a"]) == 0
    assert main(["kl-sweep", "--config", "run.json", "--out", "b"]) == 0
    for name in ("kl-sweep.csv", "kl-sweep.json"):
        assert (tmp_path / "a" / name).read_bytes() == (
            tmp_path / "b" / name
        ).read_bytes()


def test_seed_override_changes_stream(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    _write_config("sim.json", {
        "model": {"family": "tilt3", "delta": 0.1},
        "estimator": {"n": 50, "seed": 7},
    })
    assert main(["simulate", "--config", "sim.json", "--out", "base"]) == 0
    assert main([
        "simulate", "--config", "sim.json", "--out", "over", "--seed", "9",
    ]) == 0
    meta = json.loads(Path("over/run_meta.json").read_text())
    assert meta["resolved_config"]["estimator"]["seed"] == 9
    assert (tmp_path / "base" / "simulate.csv").read_bytes() != (
        tmp_path / "over" / "simulate.csv"
    ).read_bytes()


def test_unknown_estimator_field_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    _write_config("run.json", {
        "model": {"family": "tilt3"},
        "estimator": {"n": 10, "seed": 0, "bogus": 1},
    })
    assert main(["simulate", "--config", "run.json", "--out", "out"]) == 2
    err = capsys.readouterr().err
    assert "estimator.bogus" in err and "unknown field" in err


def test_missing_required_field_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    _write_config("run.json", {
        "model": {"family": "tilt3"},
        "estimator": {"seed": 0},
    })
    assert main(["simulate", "--config", "run.json", "--out", "out"]) == 2
    err = capsys.readouterr().err
    assert "estimator.n" in err and "missing required field" in err


def test_trbm_theta_and_weights_conflict_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    zeros2 = [[0.0, 0.0], [0.0, 0.0]]
    _write_config("run.json", {
        "model": {
            "family": "trbm", "n_hidden": 2, "n_visible": 2,
            "theta": [0.0] * 12,
            "W": zeros2, "Wp": zeros2, "b_Y": [0.0, 0.0], "b_H": [0.0, 0.0],
        },
        "estimator": {"n": 5, "seed": 0},
    })
    assert main(["simulate", "--config", "run.json", "--out", "out"]) == 2
    err = capsys.readouterr().err
    assert "model.theta" in err and "not both" in err


def test_weight_matrix_file_bad_header_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    Path("w.csv").write_text("junk,header\n1.0\n")
    zeros2 = [[0.0, 0.0], [0.0, 0.0]]
    _write_config("run.json", {
        "model": {
            "family": "trbm", "n_hidden": 2, "n_visible": 2,
            "W": "w.csv", "Wp": zeros2, "b_Y": [0.0, 0.0], "b_H": [0.0, 0.0],
        },
        "estimator": {"n": 5, "seed": 0},
    })
    assert main(["simulate", "--config", "run.json", "--out", "out"]) == 2
    err = capsys.readouterr().err
    assert "model.W" in err and "rows,cols" in err


def test_size_cap_exits_3(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    _write_config("run.json", {
        "model": {"family": "korder", "l": 40, "k": 3},
        "estimator": {"n": 5, "seed": 0},
    })
    assert main(["simulate", "--config", "run.json", "--out", "out"]) == 3
    err = capsys.readouterr().err
    assert "numerical failure" in err and "SizeCap" in err


def test_burn_in_exhausting_sample_exits_3(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    _write_config("run.json", {
        "model": {"family": "tilt3", "delta": 0.49},
        "estimator": {"theta0": [0.0], "n": 3, "seed": 0, "burn_in": 5},
    })
    assert main(["kl", "--config", "run.json", "--out", "out"]) == 3
    err = capsys.readouterr().err
    assert "numerical failure" in err and "TooShort" in err


def test_aic_order_command(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    _symbol_file("symbols.csv")
    _write_config("run.json", {
        "estimator": {"data": "symbols.csv", "l": 2, "k_max": 2, "seed": 0},
        "output": {"figure": False},
    })
    assert main(["aic-order", "--config", "run.json", "--out", "out"]) == 0
    lines = Path("out/aic-order.csv").read_text().splitlines()
    assert lines[0] == "k,loglik,penalty,aic,p,converged,iters"
    assert len(lines) == 3
    payload = json.loads(Path("out/aic-order.json").read_text())
    assert payload["selected"] == 1
    assert [r["penalty"] for r in payload["rows"]] == [2, 4]
    assert not (tmp_path / "out" / "aic-order.png").exists()


def test_aic_states_command(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    _symbol_file("symbols.csv")
    _write_config("run.json", {
        "estimator": {"data": "symbols.csv", "m": 1, "k_max": 2, "seed": 0},
        "output": {"figure": False},
    })
    assert main(["aic-states", "--config", "run.json", "--out", "out"]) == 0
    payload = json.loads(Path("out/aic-states.json").read_text())
    assert payload["selected"] == 2
    assert [r["penalty"] for r in payload["rows"]] == [0, 2]
    meta = json.loads(Path("out/run_meta.json").read_text())
    assert sorted(meta["artifacts"]) == ["aic-states.csv", "aic-states.json"]


def test_run_meta_contents(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    _write_config("sim.json", {
        "model": {"family": "tilt3", "delta": 0.1},
        "estimator": {"n": 20, "seed": 3},
    })
    assert main(["simulate", "--config", "sim.json", "--out", "out"]) == 0
    meta = json.loads(Path("out/run_meta.json").read_text())
    assert sorted(meta) == [
        "artifacts", "command", "resolved_config", "timings", "versions",
    ]
    assert meta["command"] == "simulate"
    assert {"ghmmkl", "numpy", "python"} <= set(meta["versions"])
    assert {"compute_s", "write_s", "total_s"} <= set(meta["timings"])
    assert meta["resolved_config"]["model"]["family"] == "tilt3"
