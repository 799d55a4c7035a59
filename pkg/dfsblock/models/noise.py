from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

TRAJECTORY_CSV_COLUMNS = ("experiment", "seed", "sigma", "duration", "mean_fidelity", "std_fidelity", "max_leakage")


class DephasingModel(BaseModel):
    """Classical Gaussian z-fields B_L(t) coupled through S^z_L of every block.

    ``collective=False`` gives every qubit its own independent field instead.
    """

    kind: Literal["static", "piecewise"] = "static"
    sigma: float = Field(default=0.0, ge=0)
    tau_c: Optional[float] = Field(default=None, gt=0)
    seed: int = 0
    collective: bool = True

    @model_validator(mode="after")
    def piecewise_needs_tau(self) -> "DephasingModel":
        if self.kind == "piecewise" and self.tau_c is None:
            raise ValueError("piecewise fields need a refresh time tau_c")
        return self


class FidelityReport(BaseModel):
    experiment: str
    seed: int
    sigma: float
    duration: float
    trajectories: int
    mean_fidelity: float
    std_fidelity: float
    max_leakage: float
    fidelities: list[float] = Field(default_factory=list)
    # classical stochastic fields stand in for the bath operators
    noise_model: str = "classical-gaussian-field"

    @property
    def standard_error(self) -> float:
        return self.std_fidelity / max(1, self.trajectories) ** 0.5

    def csv_row(self) -> dict:
        return {c: getattr(self, c) for c in TRAJECTORY_CSV_COLUMNS}
