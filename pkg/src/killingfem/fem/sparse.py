"""Symmetric sparse matrices stored as their upper triangle."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp


class SymSparseMatrix:
    """Symmetric matrix; only entries with row <= column are stored.

    Symmetry is exact by construction because the lower triangle is never
    stored, only mirrored on use.
    """

    def __init__(self, upper: sp.csr_matrix):
        if upper.shape[0] != upper.shape[1]:
            raise ValueError("matrix must be square")
        self.upper = sp.triu(upper, format="csr")
        self.upper.sum_duplicates()
        self.upper.sort_indices()

    @classmethod
    def from_entries(cls, n: int, rows, cols, values) -> "SymSparseMatrix":
        """Accumulate (row, col, value) triples; only triples with row <= col are kept.

        Callers pass a full symmetric contribution list; the lower half is dropped.
        """
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if len(rows) and (rows.min() < 0 or cols.min() < 0 or max(rows.max(), cols.max()) >= n):
            raise IndexError("dof index out of range")
        keep = rows <= cols
        mat = sp.coo_matrix((values[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
        return cls(mat)

    @property
    def shape(self) -> tuple[int, int]:
        return self.upper.shape

    @property
    def n(self) -> int:
        return self.upper.shape[0]

    def diagonal(self) -> np.ndarray:
        return self.upper.diagonal()

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = self.diagonal()
        if x.ndim == 2:
            d = d[:, None]
        return self.upper @ x + self.upper.T @ x - d * x

    __matmul__ = matvec

    def quadratic_form(self, x, y=None) -> float:
        y = x if y is None else y
        return float(np.dot(np.asarray(y, dtype=float), self.matvec(x)))

    def to_csr(self) -> sp.csr_matrix:
        full = self.upper + self.upper.T - sp.diags(self.diagonal())
        full = full.tocsr()
        full.sort_indices()
        return full

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def scaled_add(self, other: "SymSparseMatrix", alpha: float) -> "SymSparseMatrix":
        """self + alpha * other."""
        return SymSparseMatrix(self.upper + alpha * other.upper)

    def write_coordinate(self, path) -> None:
        """Full matrix as 'i j value' lines, 0-based, 17 significant digits."""
        full = self.to_csr().tocoo()
        order = np.lexsort((full.col, full.row))
        lines = [f"{i} {j} {v:.17g}" for i, j, v in
                 zip(full.row[order], full.col[order], full.data[order])]
        Path(path).write_text(f"% {self.n} {self.n} {len(lines)}\n" + "\n".join(lines) + "\n")

    @classmethod
    def read_coordinate(cls, path) -> "SymSparseMatrix":
        text = Path(path).read_text().split("\n")
        n = int(text[0].split()[1])
        rows, cols, vals = [], [], []
        for line in text[1:]:
            if line.strip():
                i, j, v = line.split()
                rows.append(int(i)); cols.append(int(j)); vals.append(float(v))
        return cls.from_entries(n, rows, cols, vals)
