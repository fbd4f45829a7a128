import json
import subprocess
import sys

import pytest

from qcsim.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main

T1_YAML = """\
experiment: t1
seed: 3
shots: 20
sweep: {name: delay_s, start: 0.0, stop: 2.0e-4, points: 6}
"""


@pytest.fixture
def t1_config(tmp_path):
    p = tmp_path / "t1.yaml"
    p.write_text(T1_YAML)
    return p


def test_run_writes_csv_and_summary(t1_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(t1_config), "--out-dir", str(out)]) == EXIT_OK
    data = next(out.glob("t1_*.csv"))
    assert data.read_text().splitlines()[0] == "index,delay_s,excited_fraction,seed,config_hash"
    summary = json.loads(next(out.glob("t1_*_summary.json")).read_text())
    assert summary["seed"] == 3 and summary["points"] == 6
    assert "wrote" in capsys.readouterr().out


def test_json_lines_and_seed_override(t1_config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(t1_config), "--out-dir", str(out), "--format", "json-lines",
                 "--seed", "11"]) == EXIT_OK
    rows = [json.loads(line) for line in next(out.glob("*.jsonl")).read_text().splitlines()]
    assert len(rows) == 6 and all(r["seed"] == 11 for r in rows)


def test_validate_prints_normalized(t1_config, capsys):
    assert main(["validate", str(t1_config)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["readout"]["assignment_fidelity"] == 0.98


def test_invalid_config_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("experiment: t1\n")
    assert main(["validate", str(p)]) == EXIT_INVALID
    assert "seed: missing required field" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.yaml")]) == EXIT_INVALID


def test_bad_arguments_exit_1():
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == EXIT_INVALID
    with pytest.raises(SystemExit) as info:
        main(["budget", "jitter", "--sweep", "1:2"])
    assert info.value.code == EXIT_INVALID


def test_runtime_failure_exit_2(tmp_path, capsys):
    p = tmp_path / "weak.yaml"
    p.write_text("experiment: t1\nseed: 0\nenvelopes: {tiny: {samples: [1]}}\n"
                 "pulses: {pi: tiny}\n")
    assert main(["run", str(p), "--out-dir", str(tmp_path)]) == EXIT_RUNTIME
    assert "cannot reach a pi rotation" in capsys.readouterr().err


def test_budget_sweep(tmp_path):
    out = tmp_path / "b"
    assert main(["budget", "jitter", "--sweep", "0:1e-11:3", "--out-dir", str(out)]) == EXIT_OK
    lines = next(out.glob("budget_sweep_*.csv")).read_text().splitlines()
    assert len(lines) == 4


def test_selftest_passes(capsys):
    assert main(["selftest"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 7


def test_console_script_entry(t1_config):
    proc = subprocess.run([sys.executable, "-m", "qcsim.cli", "validate", str(t1_config)],
                          capture_output=True, text=True)
    assert proc.returncode == 0


@pytest.mark.parametrize("name", ["t1", "ramsey", "feedback", "jitter"])
def test_demo_configs_validate(name, capsys):
    from pathlib import Path
    path = Path(__file__).parents[1] / "demos" / "configs" / f"{name}.yaml"
    assert main(["validate", str(path)]) == EXIT_OK
