"""Dense and sparse float32 kernels.

Dense tensors are plain ``numpy.float32`` arrays in C order. Sparse matrices
are CSR with sorted column indices and no duplicate entries, wrapped by
:class:`SparseMatrix` so that the canonical form is enforced in one place.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
import scipy.sparse as sp

DTYPE = np.float32


def as_tensor(a) -> np.ndarray:
    """Return ``a`` as a C-contiguous float32 array."""
    return np.ascontiguousarray(a, dtype=DTYPE)


def matmul(a, b) -> np.ndarray:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return np.matmul(a, b)


class SparseMatrix:
    """Immutable CSR matrix of float32 values.

    Rows are sorted, column indices within a row are sorted and unique.
    """

    __slots__ = ("_csr",)

    def __init__(self, csr: sp.csr_matrix):
        csr = sp.csr_matrix(csr, dtype=DTYPE, copy=True)
        csr.sum_duplicates()
        csr.sort_indices()
        self._csr = csr

    @classmethod
    def from_entries(cls, rows: int, cols: int, entries: Iterable[tuple[int, int, float]]):
        entries = list(entries)
        if entries:
            r, c, v = (np.asarray(t) for t in zip(*entries))
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0, dtype=DTYPE)
        return cls.from_coo(rows, cols, r, c, v)

    @classmethod
    def from_coo(cls, rows: int, cols: int, r, c, v=None, *, allow_duplicates=False):
        r = np.asarray(r, dtype=np.int64)
        c = np.asarray(c, dtype=np.int64)
        if v is None:
            v = np.ones(len(r), dtype=DTYPE)
        if len(r) and (r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols):
            raise IndexError("sparse entry index out of range")
        if not allow_duplicates and len(r):
            key = r * cols + c
            if len(np.unique(key)) != len(key):
                raise ValueError("duplicate (row, col) entries")
        return cls(sp.csr_matrix((np.asarray(v, dtype=DTYPE), (r, c)), shape=(rows, cols)))

    @classmethod
    def identity(cls, n: int):
        return cls(sp.identity(n, dtype=DTYPE, format="csr"))

    @classmethod
    def empty(cls, rows: int, cols: int):
        return cls(sp.csr_matrix((rows, cols), dtype=DTYPE))

    @property
    def shape(self) -> tuple[int, int]:
        return self._csr.shape

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def csr(self) -> sp.csr_matrix:
        return self._csr

    def entries(self) -> list[tuple[int, int, float]]:
        coo = self._csr.tocoo()
        return [(int(i), int(j), float(v)) for i, j, v in zip(coo.row, coo.col, coo.data)]

    def row_counts(self) -> np.ndarray:
        return np.diff(self._csr.indptr)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self._csr.sum(axis=1), dtype=DTYPE).ravel()

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix) or self.shape != other.shape:
            return NotImplemented
        a, b = self._csr, other._csr
        return (
            np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def spmm(s: SparseMatrix, x) -> np.ndarray:
    """Sparse times dense. Each output row sums its entries in column order."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ValueError(f"spmm expects a 2-D dense operand, got {x.shape}")
    if s.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {s.shape} x {x.shape}")
    return np.asarray(s.csr @ x, dtype=DTYPE)


def sparse_compose(a: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    out = a.csr @ b.csr
    out.eliminate_zeros()
    return SparseMatrix(out)
