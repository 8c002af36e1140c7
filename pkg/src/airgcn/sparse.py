"""Row-compressed sparse square matrices used as graph propagation operators.

A CsrMatrix is immutable once built; the training code treats it as a
constant (graph structure carries no gradient).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Sparse matrix in CSR layout with strictly sorted, duplicate-free rows."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.asarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.asarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        ro, ci = self.row_offsets, self.col_indices
        if ro.shape != (self.n_rows + 1,):
            raise ValueError(f"row_offsets must have length n_rows+1, got {ro.shape}")
        if ro[0] != 0 or ro[-1] != len(ci):
            raise ValueError("row_offsets must start at 0 and end at nnz")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if len(self.values) != len(ci):
            raise ValueError("values and col_indices must have equal length")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise ValueError("column index out of range")
        # strictly increasing columns within each row (also rules out duplicates)
        if len(ci) > 1:
            is_row_start = np.zeros(len(ci), dtype=bool)
            starts = ro[1:-1]
            is_row_start[starts[starts < len(ci)]] = True
            inside = ~is_row_start[1:]
            if np.any(ci[1:][inside] <= ci[:-1][inside]):
                raise ValueError("col_indices must be strictly increasing within each row")

    # -- construction --------------------------------------------------

    @classmethod
    def from_coo(cls, n_rows: int, n_cols: int, rows, cols, values) -> "CsrMatrix":
        """Build from coordinate triplets. Duplicate (row, col) pairs are rejected."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (len(rows) == len(cols) == len(values)):
            raise ValueError("rows, cols, values must have equal length")
        if len(rows) and (rows.min() < 0 or rows.max() >= n_rows):
            raise ValueError("row index out of range")
        if len(cols) and (cols.min() < 0 or cols.max() >= n_cols):
            raise ValueError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if len(rows) > 1 and np.any((np.diff(rows) == 0) & (np.diff(cols) == 0)):
            raise ValueError("duplicate (row, col) entry")
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(offsets, rows + 1, 1)
        np.cumsum(offsets, out=offsets)
        return cls(n_rows, n_cols, offsets, cols, values)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        rows, cols = np.nonzero(a)
        return cls.from_coo(a.shape[0], a.shape[1], rows, cols, a[rows, cols])

    # -- queries --------------------------------------------------------

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def row_lengths(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    @property
    def row_ids(self) -> np.ndarray:
        """Row index of each stored entry, aligned with col_indices."""
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), self.row_lengths)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        out[self.row_ids, self.col_indices] = self.values
        return out

    @cached_property
    def transpose(self) -> "CsrMatrix":
        order = np.argsort(self.col_indices, kind="stable")
        counts = np.bincount(self.col_indices, minlength=self.n_cols)
        offsets = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        return CsrMatrix(self.n_cols, self.n_rows, offsets,
                         self.row_ids[order], self.values[order])

    def is_symmetric(self, tol: float = 0.0) -> bool:
        if self.n_rows != self.n_cols:
            return False
        t = self.transpose
        return (np.array_equal(self.row_offsets, t.row_offsets)
                and np.array_equal(self.col_indices, t.col_indices)
                and np.allclose(self.values, t.values, rtol=0.0, atol=tol))

    def has_diagonal_entries(self) -> bool:
        return bool(np.any(self.row_ids == self.col_indices))

    # -- arithmetic -----------------------------------------------------

    def matmat(self, dense: np.ndarray) -> np.ndarray:
        """Sparse-dense product self @ dense, dense of shape (n_cols, d)."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.shape[0] != self.n_cols:
            raise ValueError(f"dimension mismatch: {self.n_rows}x{self.n_cols} @ {dense.shape}")
        out = np.zeros((self.n_rows,) + dense.shape[1:])
        if self.nnz == 0:
            return out
        prod = self.values[:, None] * dense[self.col_indices]
        nonempty = np.flatnonzero(self.row_lengths > 0)
        # reduceat over the starts of non-empty rows; empty segments in between
        # have zero extent, so sums land on the right rows
        out[nonempty] = np.add.reduceat(prod, self.row_offsets[nonempty], axis=0)
        return out

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matmat(np.asarray(v).reshape(-1, 1)).reshape(-1)
