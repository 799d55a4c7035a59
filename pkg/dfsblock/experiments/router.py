from dataclasses import dataclass, field
from typing import Any, Callable

from dfsblock.models.experiment import ExperimentConfig, Metric
from dfsblock.models.noise import FidelityReport


@dataclass
class Outcome:
    metrics: list[Metric]
    details: dict[str, Any] = field(default_factory=dict)
    trajectories: list[FidelityReport] = field(default_factory=list)


Handler = Callable[[ExperimentConfig], Outcome]


@dataclass
class Experiment:
    name: str
    handler: Handler
    help: str


class ExperimentRouter:
    """Collects subcommand handlers of one module; the CLI includes every router."""

    def __init__(self):
        self.experiments: dict[str, Experiment] = {}

    def experiment(self, name: str, help: str = ""):
        def decorator(fn: Handler) -> Handler:
            self.experiments[name] = Experiment(name, fn, help or (fn.__doc__ or "").strip())
            return fn
        return decorator
