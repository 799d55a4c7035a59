import numpy as np
import pytest
import scipy.linalg
from unittest.mock import patch

from dfsblock.errors import CapacityError, ModelError
from dfsblock.models.operators import MatrixOperator, OperatorExpr, PauliTerm
from dfsblock.services.operators import (
    PAULI,
    collective_operator,
    commutator_norm,
    identity_expr,
    matrix_exponential,
    operator_norm,
    pair,
    realize,
    single,
)


def test_qubit_zero_is_most_significant():
    z0 = realize(single("z", 0), 2).dense()
    assert np.allclose(np.diag(z0), [1, 1, -1, -1])


def test_xx_plus_yy_swaps_01_and_10():
    h = realize(pair("x", 0, "x", 1) + pair("y", 0, "y", 1), 2).dense()
    expected = np.zeros((4, 4))
    expected[1, 2] = expected[2, 1] = 2
    assert np.allclose(h, expected)


def test_collective_z_spectrum_on_four_qubits():
    sz = realize(collective_operator("z", range(4)), 4)
    values, counts = np.unique(sz.diagonal().real, return_counts=True)
    assert list(values) == [-4, -2, 0, 2, 4]
    assert list(counts) == [1, 4, 6, 4, 1]


def test_sparse_and_dense_agree():
    expr = pair("z", 0, "z", 3, 0.7) + pair("x", 1, "x", 2) + single("y", 2, 0.3)
    dense = realize(expr, 4, "dense")
    sparse = realize(expr, 4, "sparse")
    assert sparse.is_sparse and not dense.is_sparse
    assert np.allclose(dense.dense(), sparse.dense())


def test_tensor_and_shift():
    left = collective_operator("z", (0, 1))
    right = collective_operator("z", (0, 1)).shifted(2)
    product = left.tensor(right)
    assert len(product) == 4
    assert np.allclose(realize(product, 4).dense(), realize(left, 4).dense() @ realize(right, 4).dense())


def test_tensor_rejects_overlapping_sites():
    with pytest.raises(ModelError):
        single("z", 0).tensor(single("x", 0))


def test_repeated_site_rejected():
    with pytest.raises(ModelError):
        PauliTerm(1.0, ((0, "x"), (0, "z")))


def test_site_out_of_range():
    with pytest.raises(ModelError):
        realize(single("z", 4), 4)


def test_identity_expression():
    assert np.allclose(realize(identity_expr(2.0), 3).dense(), 2 * np.eye(8))


def test_capacity_cap_is_read_at_call_time():
    with patch("dfsblock.config.MAX_QUBITS", 3):
        with pytest.raises(CapacityError):
            realize(single("z", 0), 4)


def test_non_power_of_two_rejected():
    with pytest.raises(ModelError):
        MatrixOperator(np.eye(3))


def test_matrix_exponential_of_hermitian_is_unitary():
    H = realize(pair("x", 0, "x", 1) + single("z", 1, 0.4), 2)
    U = matrix_exponential(H, -1j * 0.37)
    assert U.unitary
    assert np.allclose(U.dense() @ U.dense().conj().T, np.eye(4))


def test_matrix_exponential_rejects_non_finite():
    with pytest.raises(ModelError):
        matrix_exponential(MatrixOperator(np.full((2, 2), np.nan)), 1.0)


def test_commutator_norm_of_pauli_pair():
    x = realize(single("x", 0), 1)
    z = realize(single("z", 0), 1)
    assert commutator_norm(x, z) == pytest.approx(2.0)
    assert commutator_norm(z, z) == 0.0


def test_operator_norm():
    assert operator_norm(realize(collective_operator("z", range(3)), 3)) == pytest.approx(3.0)


def test_expression_arithmetic():
    expr = 2.0 * single("z", 0) + single("x", 0)
    assert isinstance(expr, OperatorExpr)
    assert np.allclose(realize(expr, 1).dense(), [[2, 1], [1, -2]])


@pytest.mark.parametrize("a,b,c", [("x", "y", "z"), ("y", "z", "x"), ("z", "x", "y")])
def test_pauli_products_are_cyclic(a, b, c):
    left, right = PauliTerm.of(1.0, {0: a}), PauliTerm.of(1.0, {0: b})
    assert left @ right == PauliTerm.of(1j, {0: c})
    assert right @ left == PauliTerm.of(-1j, {0: c})
    assert left @ left == PauliTerm.of(1.0)
    assert np.allclose(realize(OperatorExpr((left @ right,)), 1).dense(), PAULI[a] @ PAULI[b])
    assert np.allclose(realize(OperatorExpr((left @ left,)), 1).dense(), np.eye(2))


def test_pauli_product_across_sites():
    xx = PauliTerm.of(0.5, {0: "x", 1: "x"})
    yy = PauliTerm.of(2.0, {0: "y", 1: "y"})
    assert xx @ yy == PauliTerm.of(-1.0, {0: "z", 1: "z"})
    expected = realize(OperatorExpr((xx,)), 2).dense() @ realize(OperatorExpr((yy,)), 2).dense()
    assert np.allclose(realize(OperatorExpr((xx @ yy,)), 2).dense(), expected)
    assert PauliTerm.of(1.0, {0: "x"}) @ PauliTerm.of(3.0, {2: "z"}) == PauliTerm.of(3.0, {0: "x", 2: "z"})


@pytest.mark.parametrize("storage", ["dense", "sparse"])
@pytest.mark.parametrize("first,second", [
    (pair("z", 0, "z", 1, 0.3) + single("z", 2, 0.7), single("z", 0, -1.1) + pair("z", 1, "z", 2, 0.4)),
    (pair("x", 0, "x", 1), pair("y", 0, "y", 1, 0.6)),
])
def test_exponential_of_commuting_sum_factorizes(storage, first, second):
    A, B = realize(first, 3, storage), realize(second, 3, storage)
    assert commutator_norm(A, B) == 0.0
    scale = -0.9j
    product = matrix_exponential(A, scale) @ matrix_exponential(B, scale)
    together = matrix_exponential(A + B, scale)
    assert np.allclose(product.dense(), together.dense(), atol=1e-10)


def test_sparse_exponential_stays_sparse():
    H = realize(pair("x", 0, "x", 1) + pair("y", 0, "y", 1) + pair("z", 1, "z", 2, 0.5), 6, "sparse")
    U = matrix_exponential(H, -0.4j)
    assert U.is_sparse and U.unitary
    assert U.matrix.nnz <= 2 * H.dim
    assert np.allclose(U.dense(), scipy.linalg.expm(-0.4j * H.dense()))

    D = matrix_exponential(realize(collective_operator("z", range(6)), 6, "sparse"), -0.2j)
    assert D.is_sparse and D.is_diagonal() and D.unitary
