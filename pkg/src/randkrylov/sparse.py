"""CSR storage, matrix-vector products and Matrix Market I/O.

Dense objects elsewhere in the package are plain ``numpy.ndarray``
instances of dtype float64 (vectors 1-D, matrices 2-D, C order unless a
builder documents otherwise).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import instrument
from .errors import MatrixMarketError, ShapeError

__all__ = [
    "SparseMatrix",
    "spmv",
    "load_matrix_market",
    "save_matrix_market",
]


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Immutable real CSR matrix with sorted, duplicate-free rows."""

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        n_rows, n_cols = int(self.n_rows), int(self.n_cols)
        if n_rows < 0 or n_cols < 0:
            raise ShapeError("negative dimension")
        if row_ptr.shape != (n_rows + 1,):
            raise ShapeError("row_ptr must have length n_rows + 1")
        if row_ptr[0] != 0 or row_ptr[-1] != len(col_idx) or len(values) != len(col_idx):
            raise ShapeError("row_ptr does not match nnz")
        if np.any(np.diff(row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if len(col_idx) and (col_idx.min() < 0 or col_idx.max() >= n_cols):
            raise ValueError("column index out of range")
        # strictly increasing columns inside each row
        if len(col_idx) > 1:
            step = np.diff(col_idx)
            row_start = np.zeros(len(col_idx), dtype=bool)
            row_start[row_ptr[1:-1][row_ptr[1:-1] < len(col_idx)]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("columns must be strictly increasing within a row")
        for arr in (row_ptr, col_idx, values):
            arr.setflags(write=False)
        object.__setattr__(self, "n_rows", n_rows)
        object.__setattr__(self, "n_cols", n_cols)
        object.__setattr__(self, "row_ptr", row_ptr)
        object.__setattr__(self, "col_idx", col_idx)
        object.__setattr__(self, "values", values)
        csr = sp.csr_matrix((values, col_idx, row_ptr), shape=(n_rows, n_cols))
        object.__setattr__(self, "_csr", csr)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        csr = sp.csr_matrix(mat, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=np.float64)))

    @classmethod
    def from_coo(cls, rows, cols, vals, shape) -> "SparseMatrix":
        """Build from triplets; duplicate entries are summed."""
        coo = sp.coo_matrix((vals, (rows, cols)), shape=shape)
        return cls.from_scipy(coo)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr.copy()

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def norm1(self) -> float:
        """Maximum absolute column sum."""
        if self.nnz == 0:
            return 0.0
        return float(np.max(np.bincount(self.col_idx, np.abs(self.values), minlength=self.n_cols)))

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def __matmul__(self, x):
        return spmv(self, x)


def spmv(A: SparseMatrix, x) -> np.ndarray:
    """``A @ x`` for a 1-D vector; counts one matvec."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.n_cols:
        raise ShapeError(f"shape mismatch: A is {A.shape}, x has shape {x.shape}")
    instrument.current().matvecs += 1
    return A._csr @ x


# -- Matrix Market ---------------------------------------------------------

def load_matrix_market(path: str | os.PathLike) -> SparseMatrix:
    """Read a ``coordinate real {general,symmetric}`` file.

    Indices are converted to 0-based, the stored triangle of a symmetric
    file is mirrored, and duplicate coordinates are summed.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", 1)
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("missing %%MatrixMarket banner", 1)
    obj, fmt, fieldtype, symm = (h.lower() for h in header[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(f"unsupported object/format {obj} {fmt}", 1)
    if fieldtype not in ("real", "integer", "double"):
        raise MatrixMarketError(f"non-real field '{fieldtype}'", 1)
    if symm not in ("general", "symmetric"):
        raise MatrixMarketError(f"unsupported symmetry '{symm}'", 1)

    i = 1
    while i < len(lines) and (not lines[i].strip() or lines[i].lstrip().startswith("%")):
        i += 1
    if i == len(lines):
        raise MatrixMarketError("missing size line", i)
    try:
        n_rows, n_cols, nnz = (int(tok) for tok in lines[i].split())
    except ValueError:
        raise MatrixMarketError("size line must hold three integers", i + 1) from None
    if n_rows < 0 or n_cols < 0 or nnz < 0:
        raise MatrixMarketError("negative size", i + 1)

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    k = 0
    for lineno in range(i + 2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text or text.startswith("%"):
            continue
        if k == nnz:
            raise MatrixMarketError("more entries than declared", lineno)
        parts = text.split()
        if len(parts) != 3:
            raise MatrixMarketError("expected 'row col value'", lineno)
        try:
            r, c, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry '{text}'", lineno) from None
        if not (1 <= r <= n_rows and 1 <= c <= n_cols):
            raise MatrixMarketError(f"index ({r}, {c}) out of range", lineno)
        if symm == "symmetric" and c > r:
            raise MatrixMarketError("symmetric file stores an upper-triangle entry", lineno)
        rows[k], cols[k], vals[k] = r - 1, c - 1, v
        k += 1
    if k != nnz:
        raise MatrixMarketError(f"expected {nnz} entries, found {k}", len(lines))

    if symm == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return SparseMatrix.from_coo(rows, cols, vals, (n_rows, n_cols))


def save_matrix_market(A: SparseMatrix, path: str | os.PathLike) -> None:
    """Write ``coordinate real general`` with 17 significant digits."""
    counts = np.diff(A.row_ptr)
    rows = np.repeat(np.arange(A.n_rows), counts)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n_rows} {A.n_cols} {A.nnz}\n")
        for r, c, v in zip(rows, A.col_idx, A.values):
            fh.write(f"{r + 1} {c + 1} {v:.17g}\n")
