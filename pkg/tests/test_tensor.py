import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from patchmg.bspline import SplineSpace, univariate_mass_stiffness
from patchmg.tensor import KroneckerOperator, TensorSpace, parameter_matrices, tensor_index


def test_tensor_index_examples():
    assert tensor_index(1, 1, 5) == 1
    assert tensor_index(2, 3, 5) == 12
    assert tensor_index(5, 5, 5) == 25


@pytest.mark.parametrize("i,j", [(0, 1), (1, 6), (6, 1)])
def test_tensor_index_out_of_range(i, j):
    with pytest.raises(IndexError):
        tensor_index(i, j, 5)


def test_greville_is_x_fastest():
    g = TensorSpace(SplineSpace(2, 2)).greville()
    assert g.shape == (16, 2)
    assert np.allclose(g[:4, 1], 0.0)
    assert np.allclose(g[:4, 0], [0, 0.25, 0.75, 1])


@given(nx=st.integers(1, 6), ny=st.integers(1, 6), seed=st.integers(0, 2 ** 16))
def test_kronecker_matvec_matches_numpy_kron(nx, ny, seed):
    rng = np.random.default_rng(seed)
    terms = [(rng.normal(size=(nx, nx)), rng.normal(size=(ny, ny)), rng.normal()) for _ in range(2)]
    op = KroneckerOperator(terms)
    ref = sum(w * np.kron(Ay, Ax) for Ax, Ay, w in terms)
    v = rng.normal(size=nx * ny)
    assert np.allclose(op @ v, ref @ v)
    assert np.allclose(op.to_dense(), ref)
    assert np.allclose(op.diagonal(), np.diag(ref))


def test_submatrix_matches_dense(rng):
    s = SplineSpace(3, 4)
    A, _ = parameter_matrices(TensorSpace(s))
    D = A.to_dense()
    rows = rng.choice(s.n ** 2, 9, replace=False)
    cols = rng.choice(s.n ** 2, 5, replace=False)
    assert np.allclose(A.submatrix(rows, cols), D[np.ix_(rows, cols)])
    assert np.allclose(A.submatrix(rows), D[np.ix_(rows, rows)])


def test_parameter_matrices_are_kronecker_sums():
    s = SplineSpace(2, 4)
    M, K = univariate_mass_stiffness(s)
    A, Mh = parameter_matrices(TensorSpace(s))
    assert abs(A.to_sparse() - (sp.kron(M, K) + sp.kron(K, M))).max() < 1e-14
    assert abs(Mh.to_sparse() - sp.kron(M, M)).max() < 1e-14


def test_scaled_and_sum():
    s = SplineSpace(1, 2)
    A, Mh = parameter_matrices(TensorSpace(s))
    B = A + Mh.scaled(3.0)
    assert np.allclose(B.to_dense(), A.to_dense() + 3 * Mh.to_dense())


def test_inconsistent_shapes_rejected():
    with pytest.raises(ValueError):
        KroneckerOperator([(np.eye(2), np.eye(3), 1.0), (np.eye(3), np.eye(3), 1.0)])
    with pytest.raises(ValueError):
        KroneckerOperator([(np.eye(2), np.eye(2), 1.0)]).matvec(np.ones(5))
