import math
from itertools import combinations
from typing import Sequence

import numpy as np
import scipy.linalg

from dfsblock.errors import ModelError
from dfsblock.logger import get_logger
from dfsblock.models.operators import MatrixOperator
from dfsblock.models.subspace import GeneratorConstraint, Projector, SubspaceBasis
from dfsblock.services.operators import commutator_norm, matrix_exponential

logger = get_logger("Subspace")

COMMUTE_TOL = 1e-10
EIGENVALUE_TOL = 1e-9
# eigenvalue-1 membership for projector products
UNIT_EIGENVALUE_THRESHOLD = 1 - 1e-8


def _check_family(constraints: Sequence[GeneratorConstraint]) -> int:
    if not constraints:
        raise ModelError("At least one generator constraint is required")
    dims = {c.operator.dim for c in constraints}
    if len(dims) != 1:
        raise ModelError(f"Generators live on different dimensions: {sorted(dims)}")
    for a, b in combinations(constraints, 2):
        norm = commutator_norm(a.operator, b.operator)
        if norm >= COMMUTE_TOL:
            raise ModelError(f"Generators do not commute (||[A,B]|| = {norm:.3e}); "
                             "the joint eigenspace is not well defined")
    return dims.pop()


def simultaneous_eigenspace(constraints: Sequence[GeneratorConstraint]) -> SubspaceBasis:
    """Orthonormal basis of the joint eigenspace of commuting Hermitian generators."""
    dim = _check_family(constraints)

    if all(c.operator.is_diagonal() for c in constraints):
        keep = np.ones(dim, dtype=bool)
        for c in constraints:
            keep &= np.abs(c.operator.diagonal().real - c.eigenvalue) < EIGENVALUE_TOL
        basis = SubspaceBasis.from_indices(dim, np.nonzero(keep)[0])
    else:
        # successive restriction: diagonalize each generator inside the
        # eigenspace selected by the previous ones
        q = np.eye(dim, dtype=np.complex128)
        for c in constraints:
            if q.shape[1] == 0:
                break
            restricted = q.conj().T @ (c.operator.dense() @ q)
            w, v = scipy.linalg.eigh((restricted + restricted.conj().T) / 2)
            q = q @ v[:, np.abs(w - c.eigenvalue) < EIGENVALUE_TOL]
        if q.shape[1]:
            q, _ = np.linalg.qr(q)
        basis = SubspaceBasis(q)

    logger.debug(f"[EIGENSPACE] {len(constraints)} generators -> rank {basis.rank}")
    return basis


def gamma_stabilizer(constraints: Sequence[GeneratorConstraint], gamma: float) -> MatrixOperator:
    """prod_a exp[-Gamma (op_a - c_a)^2]; identity exactly on the joint eigenspace."""
    if not gamma > 0:
        raise ModelError(f"Gamma must be positive, got {gamma}")
    dim = _check_family(constraints)
    out = MatrixOperator(np.eye(dim, dtype=np.complex128))
    for c in constraints:
        shifted = c.operator.dense() - c.eigenvalue * np.eye(dim)
        out = out @ matrix_exponential(MatrixOperator(shifted @ shifted), -gamma)
    return out


def projector_of(basis: SubspaceBasis) -> Projector:
    v = basis.vectors
    return Projector(MatrixOperator(v @ v.conj().T))


def projector_from_constraints(constraints: Sequence[GeneratorConstraint]) -> Projector:
    return projector_of(simultaneous_eigenspace(constraints))


def identity_projector(dim: int) -> Projector:
    return Projector(MatrixOperator(np.eye(dim, dtype=np.complex128)))


def intersect(p1: Projector, p2: Projector) -> SubspaceBasis:
    """Basis of {v : P1 v = v and P2 v = v}."""
    if p1.dim != p2.dim:
        raise ModelError(f"Dimension mismatch: {p1.dim} vs {p2.dim}")

    if p1.is_diagonal() and p2.is_diagonal():
        keep = (p1.matrix.diagonal().real * p2.matrix.diagonal().real) > UNIT_EIGENVALUE_THRESHOLD
        return SubspaceBasis.from_indices(p1.dim, np.nonzero(keep)[0])

    if commutator_norm(p1.matrix, p2.matrix) < COMMUTE_TOL:
        product = p1.matrix.dense() @ p2.matrix.dense()
        w, v = scipy.linalg.eigh((product + product.conj().T) / 2)
        vecs = v[:, w > UNIT_EIGENVALUE_THRESHOLD]
        return SubspaceBasis(vecs) if vecs.shape[1] else SubspaceBasis.empty(p1.dim)

    # general case: principal vectors at zero principal angle between the ranges
    r1 = scipy.linalg.orth(p1.matrix.dense())
    r2 = scipy.linalg.orth(p2.matrix.dense())
    if r1.shape[1] == 0 or r2.shape[1] == 0:
        return SubspaceBasis.empty(p1.dim)
    u, s, _ = np.linalg.svd(r1.conj().T @ r2)
    common = r1 @ u[:, : int(np.sum(s > UNIT_EIGENVALUE_THRESHOLD))]
    if common.shape[1] == 0:
        return SubspaceBasis.empty(p1.dim)
    return SubspaceBasis(np.linalg.qr(common)[0])


def dfs_dimension(m: int, l: int) -> int:
    """Dimension of the S^z = l eigenspace of m qubits (0 for invalid l)."""
    if abs(l) > m or (m - l) % 2:
        return 0
    return math.comb(m, (m - l) // 2)


def is_invariant(P: Projector, H: MatrixOperator, tol: float = 1e-10) -> bool:
    """[P, H] = 0 keeps every state of range(P) inside range(P) for all times."""
    if P.dim != H.dim:
        raise ModelError(f"Dimension mismatch: {P.dim} vs {H.dim}")
    return commutator_norm(P.matrix, H) < tol


def leakage(P: Projector, state: np.ndarray) -> float:
    """Squared norm of the component of ``state`` outside range(P)."""
    state = np.asarray(state)
    outside = state - P.matrix.apply(state)
    return float(np.vdot(outside, outside).real)
