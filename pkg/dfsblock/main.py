import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from dfsblock.errors import (
    CapacityError,
    ContractViolation,
    DfsBlockError,
    IntegrationError,
    LeakageError,
)
from dfsblock.experiments import encoding, noise, single_qubit, two_qubit
from dfsblock.experiments.router import Experiment
from dfsblock.logger import get_logger
from dfsblock.models.experiment import ExperimentConfig
from dfsblock.services.reports import build_report, write_report

logger = get_logger("CLI")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CONTRACT = 3

# flag -> ExperimentConfig field
FLAGS = {
    "J": ("--J", float), "J_prime": ("--Jp", float), "blocks": ("--blocks", int),
    "mu": ("--mu", float), "nu": ("--nu", float), "nu_max": ("--nu-max", float),
    "ramp": ("--ramp", str), "t_f": ("--tf", float), "lam": ("--lam", float),
    "epsilon": ("--eps", float), "d": ("--d", float), "sigma": ("--sigma", float),
    "noise_kind": ("--noise", str), "tau_c": ("--tau-c", float),
    "trajectories": ("--trajectories", int), "steps": ("--steps", int),
    "seed": ("--seed", int), "duration": ("--duration", float),
}


def experiments() -> dict[str, Experiment]:
    table = {}
    for module in (encoding, single_qubit, two_qubit, noise):
        table.update(module.router.experiments)
    return table


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    common.add_argument("--out", type=str, help="report directory (default: reports/<experiment>)")
    for field, (flag, kind) in FLAGS.items():
        common.add_argument(flag, dest=field, type=kind, default=None)

    parser = argparse.ArgumentParser(prog="dfsblock", description="DFS block simulator and verification suite")
    subparsers = parser.add_subparsers(dest="experiment", metavar="<experiment>")
    for name, exp in experiments().items():
        subparsers.add_parser(name, parents=[common], help=exp.help)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """File values first, explicit flags on top, defaults for the rest."""
    values = {}
    if args.config is not None:
        values.update(json.loads(args.config.read_text()))
    values.update({field: getattr(args, field) for field in FLAGS if getattr(args, field) is not None})
    values["experiment"] = args.experiment
    if args.out is not None:
        values["out"] = args.out
    elif "out" not in values:
        values["out"] = str(Path("reports") / args.experiment)
    return ExperimentConfig(**values)


def run(cfg: ExperimentConfig) -> int:
    exp = experiments()[cfg.experiment]
    logger.info(f"[RUN] {cfg.experiment}")
    outcome = exp.handler(cfg)
    report = build_report(cfg, outcome.metrics, outcome.details)
    write_report(report, Path(cfg.out), outcome.trajectories)
    failed = [m.name for m in report.metrics if not m.passed]
    if failed:
        logger.error(f"[DONE] {cfg.experiment}: failed {', '.join(failed)}")
        return EXIT_CONTRACT
    logger.info(f"[DONE] {cfg.experiment}: {len(report.metrics)} metrics passed")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_OK
    if args.experiment is None:
        parser.print_help()
        return EXIT_INVALID

    try:
        cfg = resolve_config(args)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"[CONFIG] cannot read {args.config}: {e}")
        return EXIT_INVALID
    except ValidationError as e:
        logger.error(f"[CONFIG] invalid configuration:\n{e}")
        return EXIT_INVALID

    try:
        return run(cfg)
    except CapacityError as e:
        logger.error(f"[CAPACITY] {e}")
        return EXIT_INVALID
    except ValidationError as e:
        logger.error(f"[CONFIG] {cfg.experiment}: {e}")
        return EXIT_INVALID
    except (LeakageError, IntegrationError, ContractViolation) as e:
        logger.exception(f"[CONTRACT] {cfg.experiment}: {e}")
        return EXIT_CONTRACT
    except DfsBlockError as e:
        logger.error(f"[MODEL] {cfg.experiment}: {e}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
