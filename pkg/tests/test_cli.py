import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from jsonschema import Draft202012Validator

from cvgibbs.cli import main
from cvgibbs.config import CONFIG_SCHEMA, REPORT_SCHEMA, validate_config
from cvgibbs.errors import ConfigError
from cvgibbs.experiments import THREADS_ENV, comparable_summary, dumps_json, format_float, resolve_threads

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

PSI = {
    "scenario": "gap-vs-psi",
    "model": {"family": "mean_field", "params": {"mu": 0.0, "U": 2.0}},
    "basis": {"per_mode_cutoff": 6},
    "filter": {"kind": "metropolis", "beta": 1.0},
    "scenario_params": {"psi_values": [0.0, 0.05]},
}


def write(tmp_path, config, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return str(path)


def run(tmp_path, config, *extra):
    out = tmp_path / "out"
    return main(["run", write(tmp_path, config), "--out", str(out), *extra]), out


def with_sp(**params):
    cfg = json.loads(json.dumps(PSI))
    cfg["scenario_params"].update(params)
    return cfg


@pytest.fixture(autouse=True)
def no_thread_env(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)


def test_run_success(tmp_path, capsys):
    code, out = run(tmp_path, PSI)
    assert code == 0
    assert "PASS gaps_positive" in capsys.readouterr().out
    rows = list(csv.reader(open(out / "gap-vs-psi_gaps.csv")))
    assert rows[0][:2] == ["psi", "gap"]
    assert len(rows) == 3


def test_report_json_matches_schema(tmp_path):
    code, out = run(tmp_path, PSI)
    assert code == 0
    data = json.loads((out / "gap-vs-psi_summary.json").read_text())
    Draft202012Validator(REPORT_SCHEMA).validate(data)
    assert data["config"] == PSI
    assert data["passed"] is True


def test_reproducible_outputs(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    path = write(tmp_path, PSI)
    assert main(["run", path, "--out", str(a)]) == 0
    assert main(["run", path, "--out", str(b), "--threads", "2"]) == 0
    assert (a / "gap-vs-psi_gaps.csv").read_bytes() == (b / "gap-vs-psi_gaps.csv").read_bytes()
    ja = comparable_summary((a / "gap-vs-psi_summary.json").read_text())
    jb = comparable_summary((b / "gap-vs-psi_summary.json").read_text())
    assert ja == jb


def test_format_selection(tmp_path):
    code, out = run(tmp_path, PSI, "--format", "json")
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == ["gap-vs-psi_summary.json"]


def test_bad_format_flag(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", write(tmp_path, PSI), "--format", "xml"])
    assert exc.value.code == 2


def test_empty_sweep_writes_header_only(tmp_path):
    code, out = run(tmp_path, with_sp(psi_values=[]))
    assert code == 0
    text = (out / "gap-vs-psi_gaps.csv").read_text()
    assert text == "psi,gap,kernel_dimension,max_eigenvalue,fixed_point_residual,hermiticity_defect\n"


def test_malformed_json_exit_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    out = tmp_path / "out"
    assert main(["run", str(path), "--out", str(out)]) == 2
    assert not out.exists()


def test_schema_violation_exit_2_before_computation(tmp_path, capsys):
    cfg = json.loads(json.dumps(PSI))
    cfg["basis"]["per_mode_cutoff"] = -1
    cfg["extra"] = 1
    code, out = run(tmp_path, cfg)
    assert code == 2
    err = capsys.readouterr().err
    assert "basis/per_mode_cutoff" in err and "extra" in err
    assert not out.exists()


def test_semantic_violation_exit_2(tmp_path):
    cfg = json.loads(json.dumps(PSI))
    del cfg["model"]["params"]["U"]
    assert run(tmp_path, cfg)[0] == 2


def test_shots_need_seed():
    cfg = json.loads((CONFIGS / "free_energy.json").read_text())
    del cfg["scenario_params"]["seed"]
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_dimension_cap_exit_3(tmp_path):
    cfg = json.loads(json.dumps(PSI))
    cfg["generator"] = {"max_superop_dim": 10}
    assert run(tmp_path, cfg)[0] == 3


def test_basis_cap_exit_3(tmp_path):
    cfg = json.loads(json.dumps(PSI))
    cfg["basis"]["max_dim"] = 3
    assert run(tmp_path, cfg)[0] == 3


def constant_table(tmp_path):
    path = tmp_path / "flat.csv"
    grid = np.linspace(-10, 10, 201)
    path.write_text("nu,re,im\n" + "".join(f"{float(n)!r},1.0,0.0\n" for n in grid))
    return str(path)


def test_kms_violation_exit_4(tmp_path):
    cfg = json.loads(json.dumps(PSI))
    cfg["filter"] = {"kind": "custom", "beta": 1.0, "table": constant_table(tmp_path)}
    assert run(tmp_path, cfg)[0] == 4


def test_invariant_failure_exit_1(tmp_path, capsys):
    cfg = {
        "scenario": "filter-audit",
        "model": {"family": "number"},
        "basis": {"per_mode_cutoff": 1},
        "filter": {"kind": "custom", "beta": 1.0, "table": constant_table(tmp_path)},
        "scenario_params": {"grid": {"min": -5, "max": 5, "points": 11}},
    }
    code, out = run(tmp_path, cfg)
    assert code == 1
    assert "FAIL kms" in capsys.readouterr().out
    assert (out / "filter-audit_summary.json").exists()


def test_missing_config_exit_5(tmp_path):
    assert main(["run", str(tmp_path / "missing.json")]) == 5


def test_unwritable_output_exit_5(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", write(tmp_path, PSI), "--out", str(blocker / "sub")]) == 5


def test_missing_filter_table_exit_5(tmp_path):
    cfg = json.loads(json.dumps(PSI))
    cfg["filter"] = {"kind": "custom", "beta": 1.0, "table": str(tmp_path / "nope.csv")}
    assert run(tmp_path, cfg)[0] == 5


def test_validate_command(tmp_path, capsys):
    assert main(["validate", write(tmp_path, PSI)]) == 0
    assert "valid" in capsys.readouterr().out
    assert main(["validate", write(tmp_path, {"scenario": "nope"}, "bad.json")]) == 2


def test_schema_command(capsys):
    assert main(["schema"]) == 0
    assert json.loads(capsys.readouterr().out) == CONFIG_SCHEMA


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    validate_config(json.loads(path.read_text()))


def test_thread_env_overrides_flag(monkeypatch):
    assert resolve_threads(None) == 1
    assert resolve_threads(4) == 4
    monkeypatch.setenv(THREADS_ENV, "3")
    assert resolve_threads(1) == 3
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        resolve_threads(1)


def test_bad_thread_env_exit_2(tmp_path, monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "0")
    assert run(tmp_path, PSI)[0] == 2


def test_mixing_trajectory_columns(tmp_path):
    cfg = {
        "scenario": "mixing-time",
        "model": {"family": "number"},
        "basis": {"per_mode_cutoff": 8},
        "filter": {"kind": "metropolis", "beta": 1.0},
        "scenario_params": {"eps_values": [0.1, 0.01]},
    }
    code, out = run(tmp_path, cfg)
    assert code == 0
    for i in range(2):
        rows = list(csv.reader(open(out / f"mixing-time_trajectory_{i}.csv")))
        assert rows[0] == ["t", "trace_distance"]
        assert float(rows[1][0]) == 0.0
    summary = list(csv.DictReader(open(out / "mixing-time_mixing.csv")))
    assert all(float(r["t_mix"]) <= float(r["bound"]) for r in summary)


def test_float_formatting():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(float("nan")) == "nan"
    assert format_float(float("-inf")) == "-inf"
    assert json.loads(dumps_json({"x": float("inf"), "y": [1, 2.5]})) == {"x": "inf", "y": [1, 2.5]}


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cvgibbs", "validate", write(tmp_path, PSI)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
