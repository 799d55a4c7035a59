import functools
from typing import Iterable, Literal

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import expm as sparse_expm
from scipy.sparse.linalg import norm as sparse_norm

from dfsblock import config
from dfsblock.errors import CapacityError, ModelError
from dfsblock.logger import get_logger
from dfsblock.models.operators import AXES, MatrixOperator, OperatorExpr, PauliTerm

logger = get_logger("Operators")

# |0> is the +1 eigenstate of sigma^z
PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}
I2 = np.eye(2, dtype=np.complex128)

Storage = Literal["auto", "dense", "sparse"]


def _check_capacity(n: int) -> None:
    if n < 1:
        raise ModelError(f"Qubit count must be positive, got {n}")
    if n > config.MAX_QUBITS:
        raise CapacityError(f"{n} qubits exceeds the configured maximum of {config.MAX_QUBITS}")


def _term_matrix(term: PauliTerm, n: int, sparse: bool):
    factors = dict(term.factors)
    if sparse:
        pieces = [sp.csr_matrix(PAULI[factors[i]]) if i in factors else sp.identity(2, format="csr")
                  for i in range(n)]
        return term.coefficient * functools.reduce(lambda a, b: sp.kron(a, b, format="csr"), pieces)
    pieces = [PAULI[factors[i]] if i in factors else I2 for i in range(n)]
    return term.coefficient * functools.reduce(np.kron, pieces)


def realize(expr: OperatorExpr, n: int, storage: Storage = "auto") -> MatrixOperator:
    """Matrix of ``expr`` on n qubits, qubit 0 the most significant tensor factor."""
    _check_capacity(n)
    if expr.max_site() >= n:
        raise ModelError(f"Site index {expr.max_site()} out of range for {n} qubits")

    sparse = storage == "sparse" or (storage == "auto" and n > config.DENSE_QUBITS)
    dim = 2 ** n
    if sparse:
        out = sp.csr_matrix((dim, dim), dtype=np.complex128)
    else:
        out = np.zeros((dim, dim), dtype=np.complex128)
    for term in expr.terms:
        out = out + _term_matrix(term, n, sparse)

    logger.debug(f"[REALIZE] {len(expr)} terms on {n} qubits ({'sparse' if sparse else 'dense'})")
    return MatrixOperator(out.tocsr() if sparse else out)


def single(axis: str, site: int, coefficient: complex = 1.0) -> OperatorExpr:
    return OperatorExpr((PauliTerm.of(coefficient, {site: axis}),))


def pair(axis_a: str, site_a: int, axis_b: str, site_b: int, coefficient: complex = 1.0) -> OperatorExpr:
    return OperatorExpr((PauliTerm.of(coefficient, {site_a: axis_a, site_b: axis_b}),))


def identity_expr(coefficient: complex = 1.0) -> OperatorExpr:
    return OperatorExpr((PauliTerm.of(coefficient),))


def collective_operator(axis: str, sites: Iterable[int]) -> OperatorExpr:
    """Unweighted sum of single-site Pauli terms, e.g. S^z = sum_i sigma_i^z."""
    sites = sorted(set(sites))
    if not sites:
        raise ModelError("collective_operator needs at least one site")
    if axis not in AXES:
        raise ModelError(f"Unknown Pauli axis '{axis}'")
    return OperatorExpr(tuple(PauliTerm.of(1.0, {s: axis}) for s in sites))


def _is_hermitian(m: np.ndarray, tol: float = 1e-12) -> bool:
    return float(np.max(np.abs(m - m.conj().T), initial=0.0)) < tol


def matrix_exponential(H: MatrixOperator, scale: complex) -> MatrixOperator:
    """exp(scale · H), kept in the storage of ``H``.

    Diagonal inputs are exponentiated entrywise. Dense Hermitian ones go
    through an eigendecomposition, anything else through Padé expm (the
    sparse variant for sparse inputs).
    """
    values = H.matrix.tocsr().data if H.is_sparse else H.dense()
    if not np.all(np.isfinite(values)) or not np.isfinite(scale):
        raise ModelError("matrix_exponential received non-finite entries")

    if H.is_sparse:
        if H.is_diagonal():
            out = sp.diags(np.exp(scale * H.diagonal()), format="csr")
        else:
            out = sparse_expm((scale * H.matrix).tocsc()).tocsr()
        return MatrixOperator(out).verified()

    m = H.dense()
    if H.is_diagonal():
        out = np.diag(np.exp(scale * np.diag(m)))
    elif _is_hermitian(m):
        w, v = scipy.linalg.eigh(m)
        out = (v * np.exp(scale * w)) @ v.conj().T
    else:
        out = scipy.linalg.expm(scale * m)
    return MatrixOperator(out).verified()


def commutator(A: MatrixOperator, B: MatrixOperator) -> MatrixOperator:
    if A.dim != B.dim:
        raise ModelError(f"Dimension mismatch: {A.dim} vs {B.dim}")
    return MatrixOperator(A.matrix @ B.matrix - B.matrix @ A.matrix)


def commutator_norm(A: MatrixOperator, B: MatrixOperator) -> float:
    """Spectral norm of AB - BA (Frobenius upper bound for sparse storage)."""
    c = commutator(A, B).matrix
    if sp.issparse(c):
        return float(sparse_norm(c)) if c.nnz else 0.0
    return float(np.linalg.norm(c, 2))


def operator_norm(H: MatrixOperator) -> float:
    if H.is_sparse:
        return float(sparse_norm(H.matrix))
    return float(np.linalg.norm(H.dense(), 2))
