import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selconv.numerics import SparseMatrix, matmul, sparse_compose, spmm


def naive_matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for t in range(k):
                out[i, j] += float(a[i, t]) * float(b[t, j])
    return out


def test_matmul_identity():
    a = np.arange(9, dtype=np.float32).reshape(3, 3)
    assert np.array_equal(matmul(np.eye(3), a), a)


def test_matmul_hand_values():
    assert np.array_equal(matmul([[1, 2], [3, 4]], [[5], [6]]), [[17], [39]])


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(7, 5)), rng.normal(size=(5, 3))
    assert np.abs(matmul(a, b) - naive_matmul(a.astype(np.float32), b.astype(np.float32))).max() <= 1e-6


def test_matmul_rejects_mismatch():
    with pytest.raises(ValueError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_spmm_empty_and_identity():
    x = np.random.default_rng(0).normal(size=(4, 2)).astype(np.float32)
    assert np.array_equal(spmm(SparseMatrix.empty(4, 4), x), np.zeros((4, 2), np.float32))
    assert np.array_equal(spmm(SparseMatrix.identity(4), x), x)


def test_spmm_matches_dense():
    rng = np.random.default_rng(1)
    dense = np.where(rng.random((50, 50)) < 0.1, rng.normal(size=(50, 50)), 0.0)
    r, c = np.nonzero(dense)
    s = SparseMatrix.from_coo(50, 50, r, c, dense[r, c])
    x = rng.normal(size=(50, 4))
    ref = dense.astype(np.float32).astype(np.float64) @ x.astype(np.float32).astype(np.float64)
    assert np.abs(spmm(s, x) - ref).max() <= 1e-5
    assert np.allclose(s.to_dense(), dense.astype(np.float32))


def test_spmm_shape_check():
    with pytest.raises(ValueError):
        spmm(SparseMatrix.identity(3), np.ones((4, 2)))


def test_compose_cases():
    a = SparseMatrix.from_entries(3, 3, [(0, 1, 1.0)])
    b = SparseMatrix.from_entries(3, 3, [(1, 2, 1.0)])
    assert sparse_compose(a, b).entries() == [(0, 2, 1.0)]
    assert sparse_compose(a, SparseMatrix.identity(3)) == a


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_compose_matches_dense(n, k, m, seed):
    rng = np.random.default_rng(seed)
    da = np.where(rng.random((n, k)) < 0.3, rng.normal(size=(n, k)), 0.0)
    db = np.where(rng.random((k, m)) < 0.3, rng.normal(size=(k, m)), 0.0)
    a = SparseMatrix.from_coo(n, k, *np.nonzero(da), da[np.nonzero(da)])
    b = SparseMatrix.from_coo(k, m, *np.nonzero(db), db[np.nonzero(db)])
    ref = a.to_dense().astype(np.float64) @ b.to_dense().astype(np.float64)
    assert np.abs(sparse_compose(a, b).to_dense() - ref).max() <= 1e-5


def test_from_coo_validation():
    with pytest.raises(ValueError):
        SparseMatrix.from_coo(2, 2, [0, 0], [1, 1], [1.0, 2.0])
    with pytest.raises(IndexError):
        SparseMatrix.from_coo(2, 2, [2], [0], [1.0])
    s = SparseMatrix.from_coo(2, 2, [0, 0], [1, 1], [1.0, 2.0], allow_duplicates=True)
    assert s.entries() == [(0, 1, 3.0)]


def test_constructor_copies_input():
    s = SparseMatrix.from_coo(3, 3, [0, 1], [1, 2], [1.0, 2.0])
    csr = s.csr
    t = SparseMatrix(csr)
    t.csr.data[:] = 0
    assert s.entries() == [(0, 1, 1.0), (1, 2, 2.0)]
