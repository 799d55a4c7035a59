import csv
import json

import pytest

from dfsblock.main import EXIT_CONTRACT, EXIT_INVALID, EXIT_OK, build_parser, experiments, main, resolve_config
from dfsblock.models.experiment import ExperimentConfig, Metric
from dfsblock.models.noise import TRAJECTORY_CSV_COLUMNS
from dfsblock.services.reports import METRIC_CSV_COLUMNS, build_report, write_report


def read_csv(path):
    with path.open() as f:
        return list(csv.DictReader(f))


def test_every_experiment_is_registered():
    assert set(experiments()) == {
        "verify-encoding", "stabilizer-convergence", "topology-regression",
        "gate-x", "gate-z", "synthesize", "map12",
        "cz-pulsed", "cz-adiabatic", "noise-immunity",
    }


def test_topology_regression_writes_report(tmp_path):
    assert main(["topology-regression", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["schema_version"] == "1"
    assert report["experiment"] == "topology-regression"
    assert report["passed"] is True
    assert report["details"]["matches"] == [[[1, 2], [3, 4]]]

    rows = read_csv(tmp_path / "metrics.csv")
    assert tuple(rows[0].keys()) == METRIC_CSV_COLUMNS
    assert {r["metric"] for r in rows} == {"matching_assignments", "standard_assignment"}
    assert not (tmp_path / "trajectories.csv").exists()


def test_stabilizer_convergence_passes(tmp_path):
    assert main(["stabilizer-convergence", "--out", str(tmp_path)]) == EXIT_OK
    curve = json.loads((tmp_path / "report.json").read_text())["details"]["curve"]
    assert [c["gamma"] for c in curve] == [1.0, 2.0, 4.0, 8.0]


def test_synthesize_uses_flags(tmp_path):
    assert main(["synthesize", "--eps", "1e-2", "--seed", "3", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["config"]["epsilon"] == 1e-2
    assert len(report["details"]["targets"]) == 21


def test_config_file_then_flags(tmp_path):
    config_file = tmp_path / "cfg.json"
    config_file.write_text(json.dumps({"J_prime": 0.3, "seed": 5, "gammas": [2.0]}))
    args = build_parser().parse_args(["stabilizer-convergence", "--config", str(config_file), "--seed", "7"])
    cfg = resolve_config(args)
    assert cfg.J_prime == 0.3
    assert cfg.seed == 7
    assert cfg.gammas == [2.0]
    assert cfg.out.endswith("stabilizer-convergence")


def test_noise_immunity_writes_trajectories(tmp_path):
    code = main(["noise-immunity", "--sigma", "0", "--trajectories", "2", "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "trajectories.csv")
    assert tuple(rows[0].keys()) == TRAJECTORY_CSV_COLUMNS
    assert [r["experiment"] for r in rows] == ["noise-immunity", "encoded-x-gate", "bare-ghz", "local-noise-control"]


def test_failed_metric_exits_three(tmp_path):
    code = main(["cz-pulsed", "--d", "0", "--out", str(tmp_path)])
    assert code == EXIT_CONTRACT
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] is False


@pytest.mark.parametrize("argv", [
    [],
    ["no-such-experiment"],
    ["gate-x", "--blocks", "0"],
    ["gate-x", "--tf", "-1"],
    ["cz-adiabatic", "--ramp", "triangle"],
])
def test_invalid_invocations_exit_two(tmp_path, argv):
    assert main([*argv, "--out", str(tmp_path)] if argv else argv) == EXIT_INVALID


def test_unreadable_config_exits_two(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["gate-x", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_INVALID
    assert main(["gate-x", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_INVALID


def test_capacity_error_exits_two(tmp_path):
    assert main(["gate-x", "--blocks", "4", "--out", str(tmp_path)]) == EXIT_INVALID


def test_gate_x_runs_above_dense_limit(tmp_path):
    assert main(["gate-x", "--blocks", "3", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["config"]["blocks"] == 3
    assert report["passed"] is True


def test_report_passes_only_when_every_metric_passes(tmp_path):
    cfg = ExperimentConfig(experiment="gate-x", out=str(tmp_path))
    good = Metric.close("a", "claim", 1.0, 1.0, 1e-12)
    bad = Metric.bound("b", "claim", 0.5, 0.1)
    assert build_report(cfg, [good]).passed
    report = build_report(cfg, [good, bad])
    assert not report.passed
    paths = write_report(report, tmp_path)
    assert [p.name for p in paths] == ["report.json", "metrics.csv"]
    rows = read_csv(tmp_path / "metrics.csv")
    assert [r["passed"] for r in rows] == ["True", "False"]
    assert rows[1]["target"] == "0.0"
