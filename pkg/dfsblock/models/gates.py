import math
from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from dfsblock.models.schedule import RampSpec

GateKind = Literal["x-rotation", "z-rotation", "z-unit-power", "map-1-to-2", "cz-pulsed", "cz-adiabatic"]


def wrap_angle(x: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(x, 2 * math.pi)
    return math.pi if w <= -math.pi else w


class GateSpec(BaseModel):
    kind: GateKind
    blocks: list[int] = Field(default_factory=lambda: [0], min_length=1, max_length=2)
    angle: float = 0.0
    power: Optional[int] = Field(default=None, ge=1)
    J: float = 1.0
    J_prime: float = 0.5
    mu: Optional[float] = None
    nu: Optional[float] = None
    ramp: Optional[RampSpec] = None
    t_f: Optional[float] = Field(default=None, gt=0)
    epsilon: float = Field(default=1e-3, gt=0)

    @field_validator("angle")
    @classmethod
    def wrapped(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("Gate angle must be finite")
        return wrap_angle(v)

    @model_validator(mode="after")
    def two_blocks_for_cz(self) -> "GateSpec":
        if self.kind.startswith("cz") and len(self.blocks) != 2:
            raise ValueError("Controlled-phase gates act on two neighbouring blocks")
        if self.kind.startswith("cz") and self.blocks[1] != self.blocks[0] + 1:
            raise ValueError("Controlled-phase gates need blocks L and L+1")
        return self


class SynthesisResult(BaseModel):
    power: int = Field(ge=1)
    achieved_angle: float
    error: float = Field(ge=0)
    evaluations: int
    search_bound: int


class AdiabaticPrediction(BaseModel):
    """Second-order phase predictions for the adiabatic controlled phase."""

    eta: float
    kappa: float
    d: float
    theta: float
    margin: float
    t_f: float
    phases: dict[str, float] = Field(default_factory=dict)
