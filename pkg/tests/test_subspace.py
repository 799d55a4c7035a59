import math

import numpy as np
import pytest

from dfsblock.errors import ModelError
from dfsblock.models.device import basis_index, basis_state
from dfsblock.models.operators import MatrixOperator
from dfsblock.models.subspace import GeneratorConstraint, Projector, SubspaceBasis
from dfsblock.services.device import block_dfs_constraints, block_hamiltonian, block_ifs_constraints
from dfsblock.services.operators import collective_operator, matrix_exponential, operator_norm, realize, single
from dfsblock.services.subspace import (
    dfs_dimension,
    gamma_stabilizer,
    identity_projector,
    intersect,
    is_invariant,
    leakage,
    projector_from_constraints,
    projector_of,
    simultaneous_eigenspace,
)


def test_block_dfs_has_six_states():
    basis = simultaneous_eigenspace(block_dfs_constraints())
    assert basis.rank == 6
    assert basis.support() == sorted(int(b, 2) for b in ("0011", "0101", "0110", "1001", "1010", "1100"))


def test_dfs_ifs_intersection_is_four_dimensional():
    common = intersect(projector_from_constraints(block_dfs_constraints()),
                       projector_from_constraints(block_ifs_constraints()))
    assert common.rank == 4
    assert {format(i, "04b") for i in common.support()} == {"0101", "0110", "1001", "1010"}


def test_dfs_dimension_counts():
    assert dfs_dimension(4, 0) == 6
    assert dfs_dimension(4, 2) == 4
    assert dfs_dimension(4, 1) == 0
    assert dfs_dimension(4, 6) == 0


def test_unreachable_eigenvalue_gives_empty_space():
    sz = realize(collective_operator("z", range(4)), 4)
    assert simultaneous_eigenspace([GeneratorConstraint(sz, 1.0)]).rank == 0


def test_non_commuting_generators_rejected():
    x = realize(single("x", 0), 1)
    z = realize(single("z", 0), 1)
    with pytest.raises(ModelError):
        simultaneous_eigenspace([GeneratorConstraint(x, 1.0), GeneratorConstraint(z, 1.0)])


def test_dense_generator_path():
    x = realize(single("x", 0), 2)
    basis = simultaneous_eigenspace([GeneratorConstraint(x, 1.0)])
    assert basis.rank == 2
    P = projector_of(basis).matrix.dense()
    assert np.allclose(P, 0.5 * np.kron([[1, 1], [1, 1]], np.eye(2)))


@pytest.mark.parametrize("gamma", [0.1, 1.0, 5.0])
def test_stabilizer_is_identity_on_dfs(gamma):
    D = gamma_stabilizer(block_dfs_constraints(), gamma)
    psi = basis_state("1001")
    assert np.allclose(D.apply(psi), psi)


@pytest.mark.parametrize("gamma", [1.0, 2.0, 4.0, 8.0])
def test_stabilizer_converges_to_projector(gamma):
    P = projector_from_constraints(block_dfs_constraints())
    D = gamma_stabilizer(block_dfs_constraints(), gamma)
    distance = np.linalg.norm(D.dense() - P.matrix.dense(), 2)
    assert distance <= math.exp(-4 * gamma) * (1 + 1e-9)


def test_stabilizer_convergence_is_monotone():
    P = projector_from_constraints(block_ifs_constraints()).matrix.dense()
    distances = [np.linalg.norm(gamma_stabilizer(block_ifs_constraints(), g).dense() - P, 2)
                 for g in (0.5, 1.0, 2.0, 4.0)]
    assert all(b <= a for a, b in zip(distances, distances[1:]))


def test_stabilizer_rejects_non_positive_gamma():
    with pytest.raises(ModelError):
        gamma_stabilizer(block_dfs_constraints(), 0.0)


def test_intersection_of_non_commuting_projectors():
    plus = Projector(MatrixOperator(0.5 * np.array([[1, 1], [1, 1]], dtype=complex)))
    zero = Projector(MatrixOperator(np.array([[1, 0], [0, 0]], dtype=complex)))
    assert intersect(plus, zero).rank == 0
    assert intersect(plus, identity_projector(2)).rank == 1


def test_projector_validation():
    with pytest.raises(ModelError):
        Projector(MatrixOperator(np.diag([1.0, 0.5]).astype(complex)))
    with pytest.raises(ModelError):
        Projector(MatrixOperator(np.array([[1, 1], [0, 0]], dtype=complex)))


def test_invariance_and_leakage():
    P = projector_from_constraints(block_dfs_constraints())
    sz = realize(collective_operator("z", range(4)), 4)
    assert is_invariant(P, sz)
    assert not is_invariant(P, realize(single("x", 0), 4))
    assert leakage(P, basis_state("0101")) == 0.0
    mixed = (basis_state("0101") + basis_state("0000")) / math.sqrt(2)
    assert leakage(P, mixed) == pytest.approx(0.5)


@pytest.mark.parametrize("m", range(1, 9))
def test_dfs_dimensions_cover_hilbert_space(m):
    assert sum(dfs_dimension(m, l) for l in range(-m, m + 1)) == 2 ** m


def test_dfs_dimension_matches_eigenspace_rank():
    sz = realize(collective_operator("z", range(4)), 4)
    for l in range(-4, 5):
        assert simultaneous_eigenspace([GeneratorConstraint(sz, float(l))]).rank == dfs_dimension(4, l)


def test_commuting_intersection_is_projector_product():
    dfs = projector_from_constraints(block_dfs_constraints())
    ifs = projector_from_constraints(block_ifs_constraints())
    common = projector_of(intersect(dfs, ifs)).matrix.dense()
    assert np.allclose(common, ifs.matrix.dense() @ dfs.matrix.dense(), atol=1e-12)
    assert np.trace(common).real == pytest.approx(4.0, abs=1e-8)


def test_logical_span_is_not_invariant_under_k23(block):
    logical = projector_of(SubspaceBasis.from_indices(16, [basis_index("1001"), basis_index("0101")]))
    assert is_invariant(logical, block_hamiltonian(block))
    assert not is_invariant(logical, block_hamiltonian(block, {(2, 3): 0.7}))


def test_invariant_subspace_does_not_leak(block):
    P = projector_from_constraints(block_dfs_constraints())
    H = block_hamiltonian(block, {(1, 2): 0.8, (2, 3): -0.5})
    assert is_invariant(P, H)
    rng = np.random.default_rng(17)
    t_max = 10 / operator_norm(H)
    for _ in range(20):
        v = P.matrix.apply(rng.standard_normal(16) + 1j * rng.standard_normal(16))
        v = v / np.linalg.norm(v)
        U = matrix_exponential(H, -1j * rng.uniform(0.0, t_max))
        assert leakage(P, U.apply(v)) < 1e-8


@pytest.mark.parametrize("constraints", [
    block_dfs_constraints(),
    block_ifs_constraints(),
    block_dfs_constraints() + block_ifs_constraints(),
    block_dfs_constraints(l=2),
])
def test_eigenspace_rank_is_stabilizer_trace(constraints):
    trace = np.trace(gamma_stabilizer(constraints, 50.0).dense()).real
    assert abs(trace - round(trace)) < 1e-8
    assert simultaneous_eigenspace(constraints).rank == round(trace)
