from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from dfsblock.errors import ModelError


@dataclass(frozen=True)
class DiagonalPerturbation:
    """sum_p amplitudes(t)[p] * diag(patterns[p]), piecewise constant between breakpoints.

    ``amplitudes`` is evaluated once per interval between consecutive
    breakpoints (at the interval midpoint), so it must not vary inside one.
    """

    patterns: np.ndarray  # (P, dim) real
    amplitudes: Callable[[float], np.ndarray]
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.patterns, dtype=float))
        if not np.all(np.isfinite(p)):
            raise ModelError("Perturbation patterns must be finite")
        object.__setattr__(self, "patterns", p)
        object.__setattr__(self, "breakpoints", tuple(sorted(float(b) for b in self.breakpoints)))

    @property
    def dim(self) -> int:
        return self.patterns.shape[1]

    def diagonal(self, t: float) -> np.ndarray:
        return np.asarray(self.amplitudes(t), dtype=float) @ self.patterns


@dataclass
class EvolutionResult:
    """Outcome of one propagation.

    ``final`` is the evolved state (one column per state for a stacked
    batch), or the full unitary when the evolution started from the
    identity. Phases are keyed by the tracked basis index and are unwrapped
    along the trajectory.
    """

    final: np.ndarray
    total_phases: dict[int, float] = field(default_factory=dict)
    dynamical_phases: dict[int, float] = field(default_factory=dict)
    leakage: float = 0.0
    step_count: int = 0
    max_step_error: float = 0.0
    duration: float = 0.0
    cyclic: bool = True
    unitarity_defect: float = 0.0

    @property
    def is_unitary(self) -> bool:
        return self.final.ndim == 2 and self.final.shape[0] == self.final.shape[1]
