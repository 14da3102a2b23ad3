"""Sparse/dense kernels shared by every solver.

CSR storage, Matrix Market I/O, append-only column stores, permutations
and a packed upper-triangular matrix with backward substitution.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Union

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ContractError",
    "MatrixMarketError",
    "SingularTriangularError",
    "CSRMatrix",
    "spmv",
    "read_matrix_market",
    "write_matrix_market",
    "DenseColumnStore",
    "Permutation",
    "PackedUpperTriangular",
    "back_substitute",
]


class ContractError(ValueError):
    """Raised when a caller violates a dimension or structure precondition."""


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input. ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class SingularTriangularError(ZeroDivisionError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"zero diagonal entry at index {index}")


# ---------------------------------------------------------------------------
# CSR matrix
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CSRMatrix:
    """Real sparse matrix in compressed sparse row format.

    Column indices are strictly increasing within each row; duplicates are
    rejected at construction. Instances are immutable.
    """

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _scipy: sp.csr_array = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ro = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        va = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.nrows < 0 or self.ncols < 0:
            raise ContractError("negative dimension")
        if ro.shape != (self.nrows + 1,):
            raise ContractError("row_offsets must have length nrows + 1")
        if ro[0] != 0 or ro[-1] != len(va) or len(ci) != len(va):
            raise ContractError("row_offsets inconsistent with stored entries")
        if np.any(np.diff(ro) < 0):
            raise ContractError("row_offsets must be nondecreasing")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.ncols):
            raise ContractError("column index out of range")
        # strictly increasing columns inside each row
        if len(ci) > 1:
            step = np.diff(ci)
            row_start = np.zeros(len(ci), dtype=bool)
            row_start[ro[1:-1][ro[1:-1] < len(ci)]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ContractError("column indices must be strictly increasing within a row")
        for name, arr in (("row_offsets", ro), ("col_indices", ci), ("values", va)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(
            self, "_scipy",
            sp.csr_array((va, ci, ro), shape=(self.nrows, self.ncols)),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def dtype(self):
        return self.values.dtype

    def matvec(self, x):
        return spmv(self, x)

    def __matmul__(self, x):
        return spmv(self, x)

    def to_dense(self) -> np.ndarray:
        return self._scipy.toarray()

    def to_scipy(self) -> sp.csr_array:
        return self._scipy.copy()

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.values))

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, vals) -> "CSRMatrix":
        """Build from triplets; duplicate (row, col) pairs are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        coo = sp.coo_array((vals, (rows, cols)), shape=(nrows, ncols))
        csr = coo.tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(nrows, ncols, csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_scipy(cls, mat) -> "CSRMatrix":
        csr = sp.csr_array(mat, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_dense(cls, a) -> "CSRMatrix":
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        return cls.from_scipy(sp.csr_array(a))

    @classmethod
    def identity(cls, n: int) -> "CSRMatrix":
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))

    def submatrix(self, rows, cols) -> "CSRMatrix":
        """Extract ``self[rows][:, cols]`` for index arrays ``rows``, ``cols``."""
        return CSRMatrix.from_scipy(self._scipy[np.asarray(rows)][:, np.asarray(cols)])

    def __eq__(self, other):
        if not isinstance(other, CSRMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def spmv(A: CSRMatrix, x) -> np.ndarray:
    """Return ``A @ x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.ncols:
        raise ContractError(f"spmv: vector of length {x.shape} incompatible with {A.shape} matrix")
    return A._scipy @ x


# ---------------------------------------------------------------------------
# Matrix Market
# ---------------------------------------------------------------------------

_Source = Union[str, os.PathLike, IO]


def _open_text(source: _Source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8"), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8"), False


def read_matrix_market(source: _Source) -> CSRMatrix:
    """Parse a ``coordinate real general|symmetric`` Matrix Market file.

    Duplicates are summed and symmetric storage is expanded. ``integer``
    fields are read as reals; ``pattern`` and ``complex`` are rejected.
    """
    fh, owned = _open_text(source)
    try:
        return _parse_mm(fh)
    finally:
        if owned:
            fh.close()


def _parse_mm(lines: Iterable[str]) -> CSRMatrix:
    it = iter(enumerate(lines, start=1))
    try:
        lineno, header = next(it)
    except StopIteration:
        raise MatrixMarketError("empty input", 1) from None
    tokens = header.strip().split()
    if len(tokens) != 5 or tokens[0] != "%%MatrixMarket":
        raise MatrixMarketError("expected '%%MatrixMarket matrix coordinate <field> <symmetry>'", lineno)
    obj, fmt, fld, sym = (t.lower() for t in tokens[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(f"unsupported object/format '{obj} {fmt}'", lineno)
    if fld not in ("real", "integer", "double"):
        raise MatrixMarketError(f"unsupported field '{fld}'", lineno)
    if sym not in ("general", "symmetric"):
        raise MatrixMarketError(f"unsupported symmetry '{sym}'", lineno)

    size = None
    for lineno, line in it:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise MatrixMarketError("size line must hold 'nrows ncols nnz'", lineno)
        try:
            size = tuple(int(p) for p in parts)
        except ValueError:
            raise MatrixMarketError("non-integer size line", lineno) from None
        break
    if size is None:
        raise MatrixMarketError("missing size line", lineno)
    nrows, ncols, nnz = size
    if nrows < 0 or ncols < 0 or nnz < 0:
        raise MatrixMarketError("negative size", lineno)
    if sym == "symmetric" and nrows != ncols:
        raise MatrixMarketError("symmetric matrix must be square", lineno)

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    count = 0
    for lineno, line in it:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise MatrixMarketError("entry line must hold 'row col value'", lineno)
        if count >= nnz:
            raise MatrixMarketError(f"more than {nnz} entries", lineno)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry '{s}'", lineno) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(f"index ({i}, {j}) out of range for {nrows}x{ncols}", lineno)
        if sym == "symmetric" and j > i:
            raise MatrixMarketError("symmetric storage must list the lower triangle only", lineno)
        rows[count], cols[count], vals[count] = i - 1, j - 1, v
        count += 1
    if count != nnz:
        raise MatrixMarketError(f"expected {nnz} entries, found {count}", lineno)

    if sym == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return CSRMatrix.from_coo(nrows, ncols, rows, cols, vals)


def write_matrix_market(A: CSRMatrix, target: _Source) -> None:
    """Write ``A`` as ``coordinate real general`` with round-trip precision."""
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8") as fh:
            _write_mm(A, fh)
    else:
        _write_mm(A, target)


def _write_mm(A: CSRMatrix, fh) -> None:
    fh.write("%%MatrixMarket matrix coordinate real general\n")
    fh.write(f"{A.nrows} {A.ncols} {A.nnz}\n")
    counts = np.diff(A.row_offsets)
    rows = np.repeat(np.arange(A.nrows), counts)
    for i, j, v in zip(rows, A.col_indices, A.values):
        fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


# ---------------------------------------------------------------------------
# Basis storage and bookkeeping
# ---------------------------------------------------------------------------


class DenseColumnStore:
    """Append-only collection of equal-length real columns.

    Columns live as rows of a growing buffer so each one is contiguous.
    """

    def __init__(self, length: int, capacity: int = 16):
        self.length = int(length)
        self._buf = np.zeros((max(capacity, 1), self.length))
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def append(self, column) -> None:
        column = np.asarray(column, dtype=np.float64)
        if column.shape != (self.length,):
            raise ContractError(f"column of shape {column.shape}, expected ({self.length},)")
        if self._count == self._buf.shape[0]:
            grown = np.zeros((2 * self._buf.shape[0], self.length))
            grown[: self._count] = self._buf[: self._count]
            self._buf = grown
        self._buf[self._count] = column
        self._count += 1

    def __getitem__(self, j: int) -> np.ndarray:
        if not -self._count <= j < self._count:
            raise IndexError(j)
        return self._buf[j % self._count]

    def matrix(self, k: int | None = None) -> np.ndarray:
        """First ``k`` columns as a ``length x k`` read-only view."""
        k = self._count if k is None else k
        if k > self._count:
            raise ContractError(f"requested {k} columns, store holds {self._count}")
        view = self._buf[:k].T
        view.flags.writeable = False
        return view

    def combine(self, coeffs) -> np.ndarray:
        """Linear combination ``sum_j coeffs[j] * column_j``."""
        coeffs = np.asarray(coeffs, dtype=np.float64)
        return coeffs @ self._buf[: len(coeffs)]


class Permutation:
    """Mutable index permutation; ``map[i]`` is the row placed at position i."""

    def __init__(self, n_or_map):
        if np.isscalar(n_or_map):
            self.map = np.arange(int(n_or_map))
        else:
            self.map = np.array(n_or_map, dtype=np.int64)
            if not np.array_equal(np.sort(self.map), np.arange(len(self.map))):
                raise ContractError("not a permutation")

    def __len__(self):
        return len(self.map)

    def __getitem__(self, i):
        return self.map[i]

    def swap(self, i: int, j: int) -> None:
        self.map[i], self.map[j] = self.map[j], self.map[i]

    def matrix(self) -> np.ndarray:
        """Dense P with ``(P @ v)[i] == v[map[i]]``."""
        n = len(self.map)
        P = np.zeros((n, n))
        P[np.arange(n), self.map] = 1.0
        return P


class PackedUpperTriangular:
    """Upper triangle stored column-major and packed; grows by whole columns.

    Column j (0-based) holds rows ``0..j`` at offset ``j*(j+1)/2``.
    """

    def __init__(self, capacity: int = 16):
        self.order = 0
        self.entries = np.zeros(capacity * (capacity + 1) // 2)

    @staticmethod
    def _offset(j: int) -> int:
        return j * (j + 1) // 2

    def append_column(self, col) -> None:
        col = np.asarray(col, dtype=np.float64)
        j = self.order
        if col.shape != (j + 1,):
            raise ContractError(f"column {j} needs {j + 1} entries, got {col.shape}")
        end = self._offset(j + 1)
        if end > len(self.entries):
            grown = np.zeros(max(2 * len(self.entries), end))
            grown[: len(self.entries)] = self.entries
            self.entries = grown
        self.entries[self._offset(j):end] = col
        self.order += 1

    def __getitem__(self, ij):
        i, j = ij
        if not (0 <= i <= j < self.order):
            raise ContractError(f"({i}, {j}) is not in the stored upper triangle")
        return self.entries[self._offset(j) + i]

    def column(self, j: int) -> np.ndarray:
        return self.entries[self._offset(j): self._offset(j + 1)]

    def to_dense(self) -> np.ndarray:
        R = np.zeros((self.order, self.order))
        for j in range(self.order):
            R[: j + 1, j] = self.column(j)
        return R

    @classmethod
    def from_dense(cls, R) -> "PackedUpperTriangular":
        R = np.asarray(R, dtype=np.float64)
        out = cls(max(R.shape[0], 1))
        for j in range(R.shape[0]):
            out.append_column(R[: j + 1, j])
        return out


def back_substitute(R: PackedUpperTriangular, t) -> np.ndarray:
    """Solve ``R z = t`` by column-oriented backward substitution."""
    t = np.asarray(t, dtype=np.float64)
    n = R.order
    if t.shape != (n,):
        raise ContractError(f"rhs of length {t.shape}, triangle of order {n}")
    z = t.copy()
    for j in range(n - 1, -1, -1):
        col = R.column(j)
        if col[j] == 0.0:
            raise SingularTriangularError(j)
        z[j] /= col[j]
        z[:j] -= z[j] * col[:j]
    return z
