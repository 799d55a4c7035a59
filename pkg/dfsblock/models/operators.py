from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np
import scipy.sparse as sp

from dfsblock.errors import ModelError

AXES = ("x", "y", "z")

# sigma^a sigma^b = i eps_abc sigma^c for a != b
_PAULI_PRODUCTS = {
    ("x", "y"): (1j, "z"), ("y", "z"): (1j, "x"), ("z", "x"): (1j, "y"),
    ("y", "x"): (-1j, "z"), ("z", "y"): (-1j, "x"), ("x", "z"): (-1j, "y"),
}

ArrayLike = Union[np.ndarray, sp.spmatrix]


@dataclass(frozen=True)
class PauliTerm:
    """coefficient × ⊗_site σ^axis; an empty factor set is coefficient × I."""

    coefficient: complex
    factors: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        sites = [s for s, _ in self.factors]
        if len(set(sites)) != len(sites):
            raise ModelError(f"Repeated site in Pauli term: {self.factors}")
        for site, axis in self.factors:
            if site < 0:
                raise ModelError(f"Negative site index {site}")
            if axis not in AXES:
                raise ModelError(f"Unknown Pauli axis '{axis}'")
        object.__setattr__(self, "factors", tuple(sorted(self.factors)))

    @classmethod
    def of(cls, coefficient: complex, factors: Mapping[int, str] | None = None) -> "PauliTerm":
        return cls(complex(coefficient), tuple((factors or {}).items()))

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.factors)

    def max_site(self) -> int:
        return max(self.sites, default=-1)

    def scaled(self, scale: complex) -> "PauliTerm":
        return PauliTerm(self.coefficient * scale, self.factors)

    def shifted(self, offset: int) -> "PauliTerm":
        return PauliTerm(self.coefficient, tuple((s + offset, a) for s, a in self.factors))

    def __matmul__(self, other: "PauliTerm") -> "PauliTerm":
        """Operator product self · other, multiplied site by site."""
        if not isinstance(other, PauliTerm):
            return NotImplemented
        coefficient = self.coefficient * other.coefficient
        factors = dict(self.factors)
        for site, axis in other.factors:
            mine = factors.pop(site, None)
            if mine is None:
                factors[site] = axis
            elif mine != axis:
                phase, factors[site] = _PAULI_PRODUCTS[(mine, axis)]
                coefficient *= phase
        return PauliTerm.of(coefficient, factors)


@dataclass(frozen=True)
class OperatorExpr:
    """Symbolic sum of Pauli strings."""

    terms: tuple[PauliTerm, ...] = ()

    @classmethod
    def from_terms(cls, terms: Iterable[PauliTerm]) -> "OperatorExpr":
        return cls(tuple(terms))

    def __add__(self, other: "OperatorExpr") -> "OperatorExpr":
        if not isinstance(other, OperatorExpr):
            return NotImplemented
        return OperatorExpr(self.terms + other.terms)

    def __mul__(self, scale: complex) -> "OperatorExpr":
        return OperatorExpr(tuple(t.scaled(scale) for t in self.terms))

    __rmul__ = __mul__

    def __len__(self) -> int:
        return len(self.terms)

    def tensor(self, other: "OperatorExpr") -> "OperatorExpr":
        """Product of two expressions acting on disjoint sites."""
        out = []
        for a in self.terms:
            for b in other.terms:
                if set(a.sites) & set(b.sites):
                    raise ModelError("tensor() requires expressions on disjoint sites")
                out.append(PauliTerm(a.coefficient * b.coefficient, a.factors + b.factors))
        return OperatorExpr(tuple(out))

    def shifted(self, offset: int) -> "OperatorExpr":
        return OperatorExpr(tuple(t.shifted(offset) for t in self.terms))

    def max_site(self) -> int:
        return max((t.max_site() for t in self.terms), default=-1)


@dataclass(frozen=True)
class MatrixOperator:
    """Concrete 2^n × 2^n realization.

    The hermitian/unitary flags are only ever set by ``verified()``, which
    checks them numerically at 1e-12.
    """

    matrix: ArrayLike
    hermitian: bool = field(default=False)
    unitary: bool = field(default=False)

    def __post_init__(self):
        shape = self.matrix.shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ModelError(f"Operator must be square, got shape {shape}")
        dim = shape[0]
        if dim < 1 or dim & (dim - 1):
            raise ModelError(f"Operator dimension {dim} is not a power of two")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_qubits(self) -> int:
        return self.dim.bit_length() - 1

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        if self.is_sparse:
            return self.matrix.toarray()
        return np.asarray(self.matrix)

    def is_diagonal(self) -> bool:
        if self.is_sparse:
            coo = self.matrix.tocoo()
            return bool(np.all(coo.row[coo.data != 0] == coo.col[coo.data != 0]))
        m = self.dense()
        return not np.any(m - np.diag(np.diag(m)))

    def diagonal(self) -> np.ndarray:
        return np.asarray(self.matrix.diagonal())

    def check_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.conj().T
        if sp.issparse(diff):
            return diff.nnz == 0 or float(abs(diff).max()) < tol
        return float(np.max(np.abs(diff), initial=0.0)) < tol

    def check_unitary(self, tol: float = 1e-12) -> bool:
        if self.is_sparse:
            m = self.matrix.tocsr()
            eye = sp.identity(self.dim, format="csr")
            gaps = (m.conj().T @ m - eye, m @ m.conj().T - eye)
            return all(g.nnz == 0 or float(abs(g).max()) < tol for g in gaps)
        m = self.dense()
        eye = np.eye(self.dim)
        return (float(np.max(np.abs(m.conj().T @ m - eye))) < tol
                and float(np.max(np.abs(m @ m.conj().T - eye))) < tol)

    def verified(self, tol: float = 1e-12) -> "MatrixOperator":
        return MatrixOperator(self.matrix, hermitian=self.check_hermitian(tol),
                              unitary=self.check_unitary(tol))

    def __matmul__(self, other: "MatrixOperator") -> "MatrixOperator":
        return MatrixOperator(self.matrix @ other.matrix)

    def __add__(self, other: "MatrixOperator") -> "MatrixOperator":
        return MatrixOperator(self.matrix + other.matrix)

    def __sub__(self, other: "MatrixOperator") -> "MatrixOperator":
        return MatrixOperator(self.matrix - other.matrix)

    def __mul__(self, scale: complex) -> "MatrixOperator":
        return MatrixOperator(self.matrix * scale)

    __rmul__ = __mul__

    def apply(self, vector: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix @ vector)
