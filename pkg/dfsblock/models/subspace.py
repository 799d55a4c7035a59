from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dfsblock.errors import ModelError
from dfsblock.models.operators import MatrixOperator


@dataclass(frozen=True)
class GeneratorConstraint:
    """op |psi> = eigenvalue |psi> for every state of the constrained subspace."""

    operator: MatrixOperator
    eigenvalue: float

    def __post_init__(self):
        if not self.operator.check_hermitian(1e-12):
            raise ModelError("Generator operators must be Hermitian")
        if not np.isfinite(self.eigenvalue):
            raise ModelError("Generator eigenvalue must be finite")


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal columns spanning a subspace of a 2^n-dimensional space."""

    vectors: np.ndarray  # shape (ambient_dimension, rank)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.complex128)
        if v.ndim != 2:
            raise ModelError("Basis vectors must be given as a 2-D column matrix")
        gram = v.conj().T @ v
        if v.shape[1] and float(np.max(np.abs(gram - np.eye(v.shape[1])))) >= 1e-12:
            raise ModelError("Basis vectors are not orthonormal")
        object.__setattr__(self, "vectors", v)

    @classmethod
    def empty(cls, ambient_dimension: int) -> "SubspaceBasis":
        return cls(np.zeros((ambient_dimension, 0), dtype=np.complex128))

    @classmethod
    def from_indices(cls, ambient_dimension: int, indices) -> "SubspaceBasis":
        indices = list(indices)
        v = np.zeros((ambient_dimension, len(indices)), dtype=np.complex128)
        v[indices, np.arange(len(indices))] = 1.0
        return cls(v)

    @property
    def ambient_dimension(self) -> int:
        return self.vectors.shape[0]

    @property
    def rank(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.rank

    def support(self) -> list[int]:
        """Computational basis indices carrying weight (for coordinate subspaces)."""
        return sorted(int(i) for i in np.nonzero(np.any(np.abs(self.vectors) > 1e-12, axis=1))[0])


@dataclass(frozen=True)
class Projector:
    """Hermitian idempotent with integer trace."""

    matrix: MatrixOperator

    def __post_init__(self):
        if self.matrix.is_diagonal():
            d = self.matrix.diagonal()
            if float(np.max(np.abs(d * d - d), initial=0.0)) >= 1e-10 or np.any(np.abs(d.imag) >= 1e-12):
                raise ModelError("Diagonal projector entries must be 0 or 1")
            return
        m = self.matrix.dense()
        if float(np.max(np.abs(m - m.conj().T), initial=0.0)) >= 1e-12:
            raise ModelError("Projector is not Hermitian")
        if float(np.max(np.abs(m @ m - m), initial=0.0)) >= 1e-10:
            raise ModelError("Projector is not idempotent")
        tr = float(np.trace(m).real)
        if abs(tr - round(tr)) >= 1e-8:
            raise ModelError(f"Projector trace {tr} is not an integer")

    @property
    def dim(self) -> int:
        return self.matrix.dim

    @property
    def rank(self) -> int:
        return int(round(float(np.sum(self.matrix.diagonal()).real)))

    def is_diagonal(self) -> bool:
        return self.matrix.is_diagonal()

    def mask(self) -> np.ndarray:
        """Boolean range indicator for diagonal (coordinate) projectors."""
        if not self.is_diagonal():
            raise ModelError("mask() is only defined for diagonal projectors")
        return self.matrix.diagonal().real > 0.5
