"""Sparse matrix kernel in compressed sparse row form.

All operations are pure functions over immutable inputs.  Every returned
matrix is canonical: row extents are monotone, column indices strictly
increase within each row, duplicate entries are summed, and exact zeros are
not stored.  Values are float64, so integer-valued inputs stay exact through
products and sums (well below 2**53).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CsrMatrix",
    "IndexSet",
    "add",
    "add_self_loops",
    "equal",
    "from_dense",
    "hop_closure",
    "is_symmetric",
    "ones_pattern",
    "row_indices",
    "select_cols",
    "select_rows_cols",
    "spgemm",
    "spmm",
    "strip_diagonal",
    "to_dense",
    "to_triplets_text",
    "transpose",
    "validate",
]


def _index_array(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("index arrays must be one-dimensional")
    return arr


@dataclass(frozen=True, eq=False)
class IndexSet:
    """Strictly increasing node indices (e.g. the kept set of a selection)."""

    indices: np.ndarray

    def __post_init__(self):
        idx = _index_array(self.indices)
        object.__setattr__(self, "indices", idx)
        if idx.size:
            if idx[0] < 0:
                raise ValueError("indices must be non-negative")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")

    def __len__(self) -> int:
        return int(self.indices.size)

    @staticmethod
    def all(n: int) -> "IndexSet":
        return IndexSet(np.arange(n, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Canonical CSR matrix; construct through :meth:`from_coo` or friends."""

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.col_idx.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def __repr__(self) -> str:
        return f"CsrMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, values) -> "CsrMatrix":
        """Build from triplets; duplicates are summed, exact zeros dropped."""
        rows = _index_array(rows)
        cols = _index_array(cols)
        vals = np.asarray(values, dtype=np.float64)
        if not (rows.size == cols.size == vals.size):
            raise ValueError("rows, cols and values must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= n_cols:
                raise ValueError("column index out of range")
        if not np.all(np.isfinite(vals)):
            raise ValueError("matrix values must be finite")
        if rows.size == 0:
            return cls.empty(n_rows, n_cols)
        keys = rows * np.int64(n_cols) + cols
        uniq, inverse = np.unique(keys, return_inverse=True)
        summed = np.bincount(inverse, weights=vals, minlength=uniq.size)
        keep = summed != 0.0
        uniq, summed = uniq[keep], summed[keep]
        out_rows = uniq // n_cols
        out_cols = uniq % n_cols
        row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(out_rows, minlength=n_rows), out=row_ptr[1:])
        return cls(n_rows, n_cols, row_ptr, out_cols.astype(np.int64), summed)

    @classmethod
    def empty(cls, n_rows: int, n_cols: int) -> "CsrMatrix":
        return cls(
            n_rows,
            n_cols,
            np.zeros(n_rows + 1, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.float64),
        )

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))


def row_indices(a: CsrMatrix) -> np.ndarray:
    """Row index of each stored entry, aligned with col_idx/values."""
    return np.repeat(np.arange(a.n_rows, dtype=np.int64), np.diff(a.row_ptr))


def validate(a: CsrMatrix) -> None:
    """Check every CSR invariant; raise ValueError on the first violation."""
    if a.row_ptr.shape != (a.n_rows + 1,):
        raise ValueError("row_ptr has wrong length")
    if a.row_ptr[0] != 0 or a.row_ptr[-1] != a.nnz:
        raise ValueError("row_ptr endpoints are wrong")
    if np.any(np.diff(a.row_ptr) < 0):
        raise ValueError("row_ptr must be non-decreasing")
    if a.col_idx.size != a.values.size:
        raise ValueError("col_idx and values lengths differ")
    if a.nnz:
        if a.col_idx.min() < 0 or a.col_idx.max() >= a.n_cols:
            raise ValueError("column index out of range")
        rows = row_indices(a)
        same_row = rows[1:] == rows[:-1]
        if np.any(same_row & (np.diff(a.col_idx) <= 0)):
            raise ValueError("column indices must strictly increase per row")
    if not np.all(np.isfinite(a.values)):
        raise ValueError("values must be finite")
    if np.any(a.values == 0.0):
        raise ValueError("explicit zeros are not stored")


def equal(a: CsrMatrix, b: CsrMatrix) -> bool:
    """Exact equality of shape, pattern and values."""
    return (
        a.shape == b.shape
        and np.array_equal(a.row_ptr, b.row_ptr)
        and np.array_equal(a.col_idx, b.col_idx)
        and np.array_equal(a.values, b.values)
    )


def to_dense(a: CsrMatrix) -> np.ndarray:
    out = np.zeros((a.n_rows, a.n_cols))
    out[row_indices(a), a.col_idx] = a.values
    return out


def from_dense(x, tol: float = 0.0) -> CsrMatrix:
    """Entries with ``|v| <= tol`` are dropped."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("dense input must be two-dimensional")
    rows, cols = np.nonzero(np.abs(x) > tol)
    return CsrMatrix.from_coo(x.shape[0], x.shape[1], rows, cols, x[rows, cols])


def spgemm(a: CsrMatrix, b: CsrMatrix) -> CsrMatrix:
    """Exact sparse-sparse product a @ b."""
    if a.n_cols != b.n_rows:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    if a.nnz == 0 or b.nnz == 0:
        return CsrMatrix.empty(a.n_rows, b.n_cols)
    a_rows = row_indices(a)
    counts = np.diff(b.row_ptr)[a.col_idx]
    total = int(counts.sum())
    if total == 0:
        return CsrMatrix.empty(a.n_rows, b.n_cols)
    # Expand each A entry (i,k) against the whole row k of B.
    starts = b.row_ptr[a.col_idx]
    offsets = np.cumsum(counts) - counts
    pos = np.arange(total) - np.repeat(offsets, counts) + np.repeat(starts, counts)
    out_rows = np.repeat(a_rows, counts)
    out_cols = b.col_idx[pos]
    out_vals = np.repeat(a.values, counts) * b.values[pos]
    return CsrMatrix.from_coo(a.n_rows, b.n_cols, out_rows, out_cols, out_vals)


def spmm(a: CsrMatrix, x) -> np.ndarray:
    """Sparse-dense product a @ x for a 2-D float array x."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("dense operand must be two-dimensional")
    if a.n_cols != x.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {x.shape}")
    out = np.zeros((a.n_rows, x.shape[1]))
    if a.nnz:
        np.add.at(out, row_indices(a), a.values[:, None] * x[a.col_idx])
    return out


def transpose(a: CsrMatrix) -> CsrMatrix:
    return CsrMatrix.from_coo(a.n_cols, a.n_rows, a.col_idx, row_indices(a), a.values)


def add(a: CsrMatrix, b: CsrMatrix) -> CsrMatrix:
    """Entrywise sum; exact cancellation drops the entry."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} + {b.shape}")
    return CsrMatrix.from_coo(
        a.n_rows,
        a.n_cols,
        np.concatenate([row_indices(a), row_indices(b)]),
        np.concatenate([a.col_idx, b.col_idx]),
        np.concatenate([a.values, b.values]),
    )


def add_self_loops(a: CsrMatrix) -> CsrMatrix:
    """a + I, the adjacency with self-loops."""
    if a.n_rows != a.n_cols:
        raise ValueError("self-loops require a square matrix")
    return add(a, CsrMatrix.identity(a.n_rows))


def ones_pattern(a: CsrMatrix) -> CsrMatrix:
    """Same sparsity pattern with every stored value replaced by 1.0."""
    return CsrMatrix(a.n_rows, a.n_cols, a.row_ptr, a.col_idx, np.ones(a.nnz))


def select_cols(a: CsrMatrix, idx: IndexSet) -> CsrMatrix:
    """Keep the listed columns, renumbered by their position in idx."""
    if len(idx) and idx.indices[-1] >= a.n_cols:
        raise ValueError("column index out of range")
    lookup = np.full(a.n_cols, -1, dtype=np.int64)
    lookup[idx.indices] = np.arange(len(idx), dtype=np.int64)
    new_cols = lookup[a.col_idx] if a.nnz else a.col_idx
    keep = new_cols >= 0
    return CsrMatrix.from_coo(
        a.n_rows, len(idx), row_indices(a)[keep], new_cols[keep], a.values[keep]
    )


def select_rows_cols(a: CsrMatrix, idx: IndexSet) -> CsrMatrix:
    """Principal submatrix on the listed indices."""
    if a.n_rows != a.n_cols:
        raise ValueError("principal submatrix requires a square matrix")
    if len(idx) and idx.indices[-1] >= a.n_rows:
        raise ValueError("index out of range")
    lookup = np.full(a.n_rows, -1, dtype=np.int64)
    lookup[idx.indices] = np.arange(len(idx), dtype=np.int64)
    rows = row_indices(a)
    new_rows = lookup[rows] if a.nnz else rows
    new_cols = lookup[a.col_idx] if a.nnz else a.col_idx
    keep = (new_rows >= 0) & (new_cols >= 0)
    return CsrMatrix.from_coo(
        len(idx), len(idx), new_rows[keep], new_cols[keep], a.values[keep]
    )


def is_symmetric(a: CsrMatrix) -> bool:
    if a.n_rows != a.n_cols:
        raise ValueError("symmetry is defined for square matrices")
    return equal(a, transpose(a))


def hop_closure(a: CsrMatrix, symmetric: bool) -> CsrMatrix:
    """All-ones pattern of contributor chains up to three hops.

    Symmetric variant: ones(A + A@A + A@A@A), computed literally.
    General variant: ones(A + A^T@A + A@A + A^T@A@A).
    Index selection is applied by the caller.
    """
    if a.n_rows != a.n_cols:
        raise ValueError("hop closure requires a square matrix")
    if symmetric:
        if not is_symmetric(a):
            raise ValueError("symmetric closure requested for an asymmetric matrix")
        a2 = spgemm(a, a)
        a3 = spgemm(a2, a)
        total = add(add(a, a2), a3)
    else:
        at = transpose(a)
        a2 = spgemm(a, a)
        total = add(add(add(a, spgemm(at, a)), a2), spgemm(at, a2))
    return ones_pattern(total)


def strip_diagonal(a: CsrMatrix) -> CsrMatrix:
    if a.n_rows != a.n_cols:
        raise ValueError("diagonal is defined for square matrices")
    rows = row_indices(a)
    keep = rows != a.col_idx
    return CsrMatrix.from_coo(
        a.n_rows, a.n_cols, rows[keep], a.col_idx[keep], a.values[keep]
    )


def to_triplets_text(a: CsrMatrix) -> str:
    """Debug dump: one ``row col value`` line per entry, row-major order."""
    rows = row_indices(a)
    lines = [
        f"{r} {c} {v:.17g}" for r, c, v in zip(rows, a.col_idx, a.values)
    ]
    return "\n".join(lines) + ("\n" if lines else "")
