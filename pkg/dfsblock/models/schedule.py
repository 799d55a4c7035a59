import math
import re
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

EDGE_KEY_RE = re.compile(r"^(\d+):([1-4])-([1-4])$")

EdgeRef = tuple[int, tuple[int, int]]


def edge_key(block: int, i: int, j: int) -> str:
    i, j = min(i, j), max(i, j)
    return f"{block}:{i}-{j}"


def parse_edge_key(key: str) -> EdgeRef:
    m = EDGE_KEY_RE.match(key)
    if not m or m.group(2) == m.group(3):
        raise ValueError(f"Edge key '{key}' must look like 'block:i-j' with 1 <= i < j <= 4")
    i, j = int(m.group(2)), int(m.group(3))
    return int(m.group(1)), (min(i, j), max(i, j))


class RampSpec(BaseModel):
    """Coupling envelope over a segment's local time s in [0, duration].

    sin2:     amplitude * sin^2(pi s / duration)
    sin:      amplitude * sin(pi s / duration)
    constant: amplitude
    """

    kind: Literal["sin2", "sin", "constant"] = "sin2"
    amplitude: float

    @field_validator("amplitude")
    @classmethod
    def finite_amplitude(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("Ramp amplitude must be finite")
        return v

    def value(self, s, duration: float):
        """Envelope at local time s (float or array)."""
        if self.kind == "constant":
            return self.amplitude + 0.0 * np.asarray(s, dtype=float)
        x = np.pi * np.asarray(s, dtype=float) / duration
        if self.kind == "sin":
            return self.amplitude * np.sin(x)
        return self.amplitude * np.sin(x) ** 2

    def derivative(self, s, duration: float):
        if self.kind == "constant":
            return 0.0 * np.asarray(s, dtype=float)
        x = np.pi * np.asarray(s, dtype=float) / duration
        k = np.pi / duration
        if self.kind == "sin":
            return self.amplitude * k * np.cos(x)
        return self.amplitude * k * np.sin(2 * x)

    def max_derivative(self, duration: float) -> float:
        if self.kind == "constant" or self.amplitude == 0:
            return 0.0
        return abs(self.amplitude) * math.pi / duration

    def mean_square(self) -> float:
        """(1/T) * integral of value^2 over the segment."""
        return self.amplitude ** 2 * {"constant": 1.0, "sin": 0.5, "sin2": 3.0 / 8.0}[self.kind]


CouplingValue = Union[float, RampSpec]


class PulseSegment(BaseModel):
    duration: float = Field(gt=0)
    couplings: dict[str, CouplingValue] = Field(default_factory=dict)
    label: Optional[str] = None

    @field_validator("duration")
    @classmethod
    def finite_duration(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("Segment duration must be finite")
        return v

    @field_validator("couplings")
    @classmethod
    def valid_keys(cls, v: dict[str, CouplingValue]) -> dict[str, CouplingValue]:
        for key, value in v.items():
            parse_edge_key(key)
            if isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"Coupling on {key} must be finite")
        return v

    @property
    def is_constant(self) -> bool:
        return all(not isinstance(v, RampSpec) or v.kind == "constant" for v in self.couplings.values())

    def values_at(self, s: float) -> dict[EdgeRef, float]:
        out = {}
        for key, value in self.couplings.items():
            out[parse_edge_key(key)] = float(value.value(s, self.duration)) if isinstance(value, RampSpec) else value
        return out


class PulseSchedule(BaseModel):
    """Time-ordered coupling settings; the first segment acts first."""

    segments: list[PulseSegment] = Field(default_factory=list)
    metadata: dict[str, Any] = Field(default_factory=dict)

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)

    @property
    def is_piecewise(self) -> bool:
        return all(s.is_constant for s in self.segments)

    def edges(self) -> set[EdgeRef]:
        return {parse_edge_key(k) for s in self.segments for k in s.couplings}

    def blocks(self) -> set[int]:
        return {block for block, _ in self.edges()}

    def is_cyclic(self, tol: float = 1e-12) -> bool:
        """H(t_f) = H(0): every coupling at the end equals its value at the start."""
        if not self.segments:
            return True
        start = self.segments[0].values_at(0.0)
        last = self.segments[-1]
        end = last.values_at(last.duration)
        for edge in set(start) | set(end):
            if abs(start.get(edge, 0.0) - end.get(edge, 0.0)) > tol:
                return False
        return True

    def then(self, other: "PulseSchedule") -> "PulseSchedule":
        """``self`` followed by ``other``; metadata of ``other`` wins on key clashes."""
        return PulseSchedule(segments=[*self.segments, *other.segments],
                             metadata={**self.metadata, **other.metadata})
