import csv
import json
import math
import subprocess
import sys

import pytest

from qcap.cli import main
from qcap.errors import ConfigError, DimensionOverflow
from qcap.experiment import (
    EXIT_CONFIG,
    EXIT_DIMENSION,
    EXIT_INVARIANT,
    EXIT_OK,
    SUMMARY_COLUMNS,
    ExperimentConfig,
    run_experiment,
    valid_chain_pairs,
)

DEP = {"family": "depolarizing", "d": 2, "p": 0.5}
IDENT = {"family": "identity", "d": 2}
SOLVER = {"probes": 2000}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run_cli(tmp_path, task, cfg, *extra):
    prefix = str(tmp_path / "out" / task)
    code = main([task, "--config", write(tmp_path, cfg), "--out", prefix, *extra])
    return code, prefix


def read_rows(prefix):
    with open(prefix + ".summary.csv") as fh:
        return list(csv.DictReader(fh))


def test_capacity_task(tmp_path, capsys):
    code, prefix = run_cli(tmp_path, "capacity", {"task": "capacity", "channel": DEP, "solver": SOLVER})
    assert code == EXIT_OK
    rep = json.loads(open(prefix + ".report.json").read())
    chi = math.log(2) + 0.25 * math.log(0.25) + 0.75 * math.log(0.75)
    assert rep["capacity"]["chi"] == pytest.approx(chi, abs=1e-7)
    assert rep["capacity"]["certificate_gap"] <= 1e-5
    assert "nats" in capsys.readouterr().out


def test_bits_flag_changes_display_only(tmp_path, capsys):
    cfg = {"task": "capacity", "channel": DEP, "solver": SOLVER}
    run_cli(tmp_path, "capacity", cfg, "--bits")
    out = capsys.readouterr().out
    assert "bits" in out and "0.188722" in out


def test_theorem1_basis_rows(tmp_path):
    cfg = {"task": "theorem1", "channel": IDENT, "code": "basis", "sweep": {"n_values": [1, 2, 3, 4]},
           "solver": SOLVER}
    code, prefix = run_cli(tmp_path, "theorem1", cfg)
    assert code == EXIT_OK
    rows = read_rows(prefix)
    assert list(rows[0]) == list(SUMMARY_COLUMNS)
    assert len(rows) == 4
    for r in rows:
        assert abs(float(r["lhs"])) < 1e-9
        assert float(r["slack"]) == pytest.approx(math.log(2), abs=1e-8)


def test_sweep_row_count(tmp_path):
    cfg = {"task": "theorem2", "channel": {"family": "depolarizing", "d": 2, "p": 0.1},
           "sweep": {"n_values": [1, 2], "rates": [0.5, 0.9], "trials": 3}, "solver": SOLVER}
    code, prefix = run_cli(tmp_path, "theorem2", cfg)
    assert code == EXIT_OK
    assert len(read_rows(prefix)) == 2 * 2 * 3


def test_uniqueness_task(tmp_path):
    cfg = {"task": "uniqueness", "channel": {"family": "depolarizing", "d": 2, "p": 0.3}, "restarts": 3,
           "solver": SOLVER}
    code, prefix = run_cli(tmp_path, "uniqueness", cfg)
    assert code == EXIT_OK
    rep = json.loads(open(prefix + ".report.json").read())
    assert rep["max_pairwise_distance"] <= 1e-5


def test_channel_file_relative_to_config(tmp_path):
    (tmp_path / "ch.json").write_text(json.dumps(DEP))
    cfg = {"task": "capacity", "channel": {"file": "ch.json"}, "solver": SOLVER}
    code, _ = run_cli(tmp_path, "capacity", cfg)
    assert code == EXIT_OK


@pytest.mark.parametrize("cfg", [
    {"task": "capacity"},
    {"task": "nope", "channel": DEP},
    {"task": "capacity", "channel": DEP, "bogus": 1},
    {"task": "theorem1", "channel": DEP, "code": "random", "sweep": {"n_values": [1]}},
    {"task": "capacity", "channel": {"family": "depolarizing", "d": 2, "p": 3}},
    {"task": "capacity", "channel": {"family": "random", "d": 2}},
    {"task": "proof-chain", "channel": IDENT, "alpha_values": [0.4], "t_values": [0.1]},
])
def test_config_errors_exit_2(tmp_path, cfg):
    task = cfg["task"] if cfg["task"] in ("capacity", "theorem1", "proof-chain") else "capacity"
    code, _ = run_cli(tmp_path, task, cfg)
    assert code == EXIT_CONFIG


def test_task_mismatch_is_config_error(tmp_path):
    code, _ = run_cli(tmp_path, "certify", {"task": "capacity", "channel": DEP})
    assert code == EXIT_CONFIG


def test_dimension_overflow_exit_3(tmp_path):
    cfg = {"task": "theorem2", "channel": IDENT, "code": "basis", "sweep": {"n_values": [13]}}
    code, _ = run_cli(tmp_path, "theorem2", cfg)
    assert code == EXIT_DIMENSION
    with pytest.raises(DimensionOverflow):
        ExperimentConfig.from_dict(cfg)


def test_proof_chain_reports_failed_steps(tmp_path):
    cfg = {"task": "proof-chain", "channel": {"family": "random", "d": 2, "kraus_range": [1, 3]},
           "sweep": {"trials": 6}, "seed": 11, "max_n": 2, "max_M": 3}
    code, prefix = run_cli(tmp_path, "proof-chain", cfg)
    rep = json.loads(open(prefix + ".report.json").read())
    assert len(rep["points"]) == 6
    failed = {s for p in rep["points"] for s in p["failed_steps"]}
    assert failed <= {"step4_hypercontractivity"}
    assert code == (EXIT_INVARIANT if failed else EXIT_OK)


def test_valid_chain_pairs():
    pairs = valid_chain_pairs([0.1, 0.25, 0.4], [0.1, 0.5, 1.0])
    assert (0.1, 0.1) not in pairs and (0.4, 0.5) not in pairs
    assert (0.25, 0.5) in pairs and len(pairs) == 5


def test_parallel_matches_serial():
    cfg = ExperimentConfig.from_dict({"task": "proof-chain", "channel": {"family": "random", "d": 2},
                                      "sweep": {"trials": 4}, "seed": 3, "max_n": 2})
    a = run_experiment(cfg, jobs=1)
    b = run_experiment(cfg, jobs=2)
    assert json.dumps(a.report, sort_keys=True) == json.dumps(b.report, sort_keys=True)


def test_reports_are_byte_identical(tmp_path):
    cfg = {"task": "theorem1", "channel": {"family": "depolarizing", "d": 2, "p": 0.1},
           "sweep": {"n_values": [1, 2], "rates": [0.5], "trials": 2}, "seed": 7, "solver": SOLVER}
    _, prefix = run_cli(tmp_path, "theorem1", cfg)
    first = [open(prefix + ext, "rb").read() for ext in (".report.json", ".summary.csv")]
    _, prefix = run_cli(tmp_path, "theorem1", cfg)
    second = [open(prefix + ext, "rb").read() for ext in (".report.json", ".summary.csv")]
    assert first == second


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "qcap", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "exit status" in out.stdout and "configuration error" in out.stdout


def test_config_error_type():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"task": "capacity", "channel": DEP, "sweep": {"rates": [0.5], "M_values": [2]}})
