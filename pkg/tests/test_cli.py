import json
import subprocess
import sys
from pathlib import Path

import pytest

from tsrt.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def write_config(tmp_path, **overrides):
    cfg = json.loads((SCENARIOS / "chain5.json").read_text())
    for key, value in overrides.items():
        if value is None:
            cfg.pop(key, None)
        else:
            cfg[key] = value
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.mark.parametrize("command, extra", [
    ("tree", []),
    ("run", []),
    ("sweep", []),
    ("evaluate", []),
    ("run", ["--mode", "paper"]),
    ("sweep", ["--format", "json"]),
])
def test_outputs_byte_identical(tmp_path, command, extra):
    outs = []
    for i in range(2):
        out = tmp_path / f"out{i}"
        assert main([command, "--config", str(SCENARIOS / "chain5.json"), "--out", str(out), *extra]) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] and outs[0]


def test_run_trace_identical(tmp_path):
    traces = []
    for i in range(2):
        t = tmp_path / f"trace{i}"
        cfg = SCENARIOS / "noisy_mesh.json"
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r"), "--trace", str(t)]) == EXIT_OK
        traces.append(t.read_bytes())
    assert traces[0] == traces[1]


def test_seed_override_changes_run(tmp_path):
    cfg = str(SCENARIOS / "noisy_mesh.json")
    main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a").read_text() != (tmp_path / "b").read_text()


def test_tree_levels_linear(tmp_path):
    out = tmp_path / "tree"
    assert main(["tree", "--config", str(SCENARIOS / "chain5.json"), "--out", str(out)]) == EXIT_OK
    rows = [line.split() for line in out.read_text().splitlines() if not line.startswith("#")]
    assert [int(r[2]) for r in rows] == [0, 1, 2, 3, 4, 5]


def test_sweep_thirty_rows(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", str(SCENARIOS / "chain5.json"), "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "N,M_tsrt,M_tpsn,tau_max_tsrt,tau_max_tpsn,mode"
    assert len(lines) == 31


def test_evaluate_lines(tmp_path, capsys):
    assert main(["evaluate", "--config", str(SCENARIOS / "chain5_ps1.json")]) == EXIT_OK
    keys = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert keys == ["mode", "n_beacons", "sigma_eps", "sigma_o", "sigma_s", "tau_max", "tau", "M"]


def test_total_loss_is_runtime_failure(tmp_path):
    cfg = write_config(tmp_path, sim={"seed": 1, "loss_prob": 1.0})
    assert main(["tree", "--config", str(cfg), "--out", str(tmp_path / "t")]) == EXIT_RUNTIME
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == EXIT_RUNTIME


def test_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert main(["evaluate", "--config", str(bad)]) == EXIT_VALIDATION
    assert "invalid JSON" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["evaluate", "--config", str(tmp_path / "nope.json")]) == EXIT_VALIDATION


def test_sweep_bad_range(tmp_path):
    cfg = str(SCENARIOS / "chain5.json")
    assert main(["sweep", "--config", cfg, "--n-min", "5", "--n-max", "2"]) == EXIT_VALIDATION


def test_invalid_probability_names_field(tmp_path, capsys):
    cfg = json.loads((SCENARIOS / "chain5.json").read_text())
    cfg["sync"]["ps_limit"] = 1.5
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["evaluate", "--config", str(path)]) == EXIT_VALIDATION
    assert "ps_limit" in capsys.readouterr().err


def test_missing_key_named(tmp_path, capsys):
    cfg = write_config(tmp_path, error_model=None)
    assert main(["evaluate", "--config", str(cfg)]) == EXIT_VALIDATION
    assert "missing config key: error_model" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, colour="blue")
    assert main(["evaluate", "--config", str(cfg)]) == EXIT_VALIDATION
    assert "colour" in capsys.readouterr().err


def test_bad_argument_is_validation_error():
    assert main(["run", "--config", "x", "--mode", "sideways"]) == EXIT_VALIDATION


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "tsrt", "evaluate", "--config",
                          str(SCENARIOS / "chain5.json")], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("mode AO")
