import math
from typing import Any, Literal, Optional

from pydantic import BaseModel, Field, field_validator

from dfsblock import config


class ExperimentConfig(BaseModel):
    """Resolved parameters of one CLI experiment; JSON file values, then flag overrides."""

    experiment: str
    # device
    J: float = 1.0
    J_prime: float = 0.5
    blocks: int = Field(default=2, ge=1)
    # gates
    mu: float = 1.0
    nu: float = 1.0
    nu_max: float = 0.2
    ramp: Literal["sin2", "sin"] = "sin2"
    t_f: float = Field(default=200.0, gt=0)
    lam: float = math.pi / 2
    epsilon: float = Field(default=1e-3, gt=0)
    d: float = 0.6
    ratios: list[float] = Field(default_factory=lambda: [10.0, 30.0, 100.0])
    gammas: list[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    # noise
    sigma: float = Field(default=1.0, ge=0)
    noise_kind: Literal["static", "piecewise"] = "static"
    tau_c: Optional[float] = Field(default=None, gt=0)
    trajectories: int = Field(default_factory=lambda: config.DEFAULT_TRAJECTORIES, ge=1)
    duration: float = Field(default=1.0, gt=0)
    # integrator
    steps: Optional[int] = Field(default=None, ge=100)
    seed: int = 0
    out: str = "reports"

    @field_validator("J", "J_prime", "mu", "nu", "nu_max", "t_f", "lam", "d", "sigma", "duration")
    @classmethod
    def finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("physical parameters must be finite")
        return v


class Metric(BaseModel):
    name: str
    claim: str
    value: float
    target: Optional[float] = None
    tolerance: Optional[float] = None
    passed: bool = True

    @classmethod
    def close(cls, name: str, claim: str, value: float, target: float, tolerance: float) -> "Metric":
        return cls(name=name, claim=claim, value=value, target=target, tolerance=tolerance,
                   passed=bool(abs(value - target) <= tolerance))

    @classmethod
    def bound(cls, name: str, claim: str, value: float, tolerance: float) -> "Metric":
        """Passes when value <= tolerance."""
        return cls(name=name, claim=claim, value=value, target=0.0, tolerance=tolerance,
                   passed=bool(value <= tolerance))

    @classmethod
    def check(cls, name: str, claim: str, value: float, passed: bool) -> "Metric":
        return cls(name=name, claim=claim, value=value, passed=bool(passed))

    @classmethod
    def info(cls, name: str, claim: str, value: float) -> "Metric":
        return cls(name=name, claim=claim, value=value)


class ExperimentReport(BaseModel):
    schema_version: str = config.REPORT_SCHEMA_VERSION
    experiment: str
    config: dict[str, Any]
    metrics: list[Metric]
    passed: bool
    details: dict[str, Any] = Field(default_factory=dict)
