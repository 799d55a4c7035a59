import csv
from pathlib import Path
from typing import Any, Optional, Sequence

from dfsblock import config
from dfsblock.logger import get_logger
from dfsblock.models.experiment import ExperimentConfig, ExperimentReport, Metric
from dfsblock.models.noise import TRAJECTORY_CSV_COLUMNS, FidelityReport

logger = get_logger("Reports")

METRIC_CSV_COLUMNS = ("schema_version", "experiment", "metric", "claim", "value", "target", "tolerance", "passed")


def build_report(cfg: ExperimentConfig, metrics: Sequence[Metric],
                 details: Optional[dict[str, Any]] = None) -> ExperimentReport:
    return ExperimentReport(
        experiment=cfg.experiment,
        config=cfg.model_dump(),
        metrics=list(metrics),
        passed=all(m.passed for m in metrics),
        details=details or {},
    )


def write_report(report: ExperimentReport, out_dir: Path,
                 trajectories: Sequence[FidelityReport] = ()) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / "report.json"
    path.write_text(report.model_dump_json(indent=2))
    written.append(path)

    path = out_dir / "metrics.csv"
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRIC_CSV_COLUMNS)
        writer.writeheader()
        for m in report.metrics:
            writer.writerow({
                "schema_version": config.REPORT_SCHEMA_VERSION, "experiment": report.experiment,
                "metric": m.name, "claim": m.claim, "value": repr(m.value),
                "target": "" if m.target is None else repr(m.target),
                "tolerance": "" if m.tolerance is None else repr(m.tolerance),
                "passed": m.passed,
            })
    written.append(path)

    if trajectories:
        path = out_dir / "trajectories.csv"
        with path.open("w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=TRAJECTORY_CSV_COLUMNS)
            writer.writeheader()
            for r in trajectories:
                writer.writerow(r.csv_row())
        written.append(path)

    logger.info(f"[WRITE] {', '.join(p.name for p in written)} -> {out_dir}")
    return written
