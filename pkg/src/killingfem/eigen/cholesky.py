"""Up-looking sparse Cholesky factorization with a fill-reducing ordering."""

from __future__ import annotations

import numba as nb
import numpy as np
import scipy.sparse as sp

from .ordering import amd_order


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    def __init__(self, column: int):
        self.column = column
        super().__init__(f"matrix is not positive definite (pivot {column})")


@nb.njit(cache=True)
def _etree(n, Up, Ui):
    """Elimination tree from the upper triangle stored by columns."""
    parent = -np.ones(n, np.int64)
    ancestor = -np.ones(n, np.int64)
    for k in range(n):
        for p in range(Up[k], Up[k + 1]):
            i = Ui[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


@nb.njit(cache=True)
def _ereach(k, Up, Ui, parent, s, w, n):
    """Pattern of row k of L in s[top:n], topologically ordered."""
    top = n
    w[k] = k
    for p in range(Up[k], Up[k + 1]):
        i = Ui[p]
        if i > k:
            continue
        length = 0
        while w[i] != k:
            s[length] = i
            length += 1
            w[i] = k
            i = parent[i]
        while length > 0:
            top -= 1
            length -= 1
            s[top] = s[length]
    return top


@nb.njit(cache=True)
def _column_counts(n, Up, Ui, parent):
    counts = np.ones(n, np.int64)  # diagonal
    s = np.empty(n, np.int64)
    w = -np.ones(n, np.int64)
    for k in range(n):
        top = _ereach(k, Up, Ui, parent, s, w, n)
        for t in range(top, n):
            counts[s[t]] += 1
    return counts


@nb.njit(cache=True)
def _numeric(n, Up, Ui, Ux, parent, Lp, Li, Lx):
    """Fill Li, Lx (diagonal first in each column); returns -1 or the failing column."""
    c = Lp[:-1].copy()
    s = np.empty(n, np.int64)
    w = -np.ones(n, np.int64)
    x = np.zeros(n)
    for k in range(n):
        top = _ereach(k, Up, Ui, parent, s, w, n)
        x[k] = 0.0
        for p in range(Up[k], Up[k + 1]):
            if Ui[p] <= k:
                x[Ui[p]] = Ux[p]
        d = x[k]
        x[k] = 0.0
        for t in range(top, n):
            i = s[t]
            lki = x[i] / Lx[Lp[i]]
            x[i] = 0.0
            for p in range(Lp[i] + 1, c[i]):
                x[Li[p]] -= Lx[p] * lki
            d -= lki * lki
            p = c[i]
            c[i] += 1
            Li[p] = k
            Lx[p] = lki
        if not d > 0.0:
            return k
        p = c[k]
        c[k] += 1
        Li[p] = k
        Lx[p] = np.sqrt(d)
    return -1


@nb.njit(cache=True)
def _solve_lower(n, Lp, Li, Lx, X):
    for j in range(X.shape[1]):
        for col in range(n):
            v = X[col, j] / Lx[Lp[col]]
            X[col, j] = v
            for p in range(Lp[col] + 1, Lp[col + 1]):
                X[Li[p], j] -= Lx[p] * v


@nb.njit(cache=True)
def _solve_upper(n, Lp, Li, Lx, X):
    for j in range(X.shape[1]):
        for col in range(n - 1, -1, -1):
            v = X[col, j]
            for p in range(Lp[col] + 1, Lp[col + 1]):
                v -= Lx[p] * X[Li[p], j]
            X[col, j] = v / Lx[Lp[col]]


class SparseCholesky:
    """P A P^T = L L^T for a symmetric positive definite sparse matrix.

    Parameters
    ----------
    matrix : scipy sparse matrix or object with ``to_csr()``
        Full symmetric matrix.
    perm : array, optional
        Symmetric permutation; computed by AMD when omitted.
    """

    def __init__(self, matrix, perm: np.ndarray | None = None):
        full = matrix.to_csr() if hasattr(matrix, "to_csr") else sp.csr_matrix(matrix)
        n = full.shape[0]
        self.n = n
        self.perm = amd_order(full) if perm is None else np.asarray(perm, dtype=np.int64)
        self.inverse_perm = np.empty(n, dtype=np.int64)
        self.inverse_perm[self.perm] = np.arange(n)
        C = full[self.perm][:, self.perm]
        U = sp.triu(C, format="csc")
        U.sort_indices()
        Up, Ui = U.indptr.astype(np.int64), U.indices.astype(np.int64)
        self.parent = _etree(n, Up, Ui)
        counts = _column_counts(n, Up, Ui, self.parent)
        self.Lp = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.Li = np.zeros(self.Lp[-1], np.int64)
        self.Lx = np.zeros(self.Lp[-1])
        fail = _numeric(n, Up, Ui, U.data.astype(float), self.parent, self.Lp, self.Li, self.Lx)
        if fail >= 0:
            raise NotPositiveDefiniteError(int(self.perm[fail]))

    @property
    def nnz(self) -> int:
        return int(self.Lp[-1])

    def factor_matrix(self) -> sp.csc_matrix:
        return sp.csc_matrix((self.Lx, self.Li, self.Lp), shape=(self.n, self.n))

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        vec = b.ndim == 1
        X = np.ascontiguousarray(b.reshape(self.n, -1)[self.perm])
        _solve_lower(self.n, self.Lp, self.Li, self.Lx, X)
        _solve_upper(self.n, self.Lp, self.Li, self.Lx, X)
        out = X[self.inverse_perm]
        return out[:, 0] if vec else out

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(self.Lx[self.Lp[:-1]])))
