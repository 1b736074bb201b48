"""Dense generalized symmetric eigensolver used as an oracle.

The pencil (A, M) is reduced with the Cholesky factor of M to a standard
symmetric matrix, which is tridiagonalized by Householder reflections and
diagonalized by the implicit QL iteration with Wilkinson-type shifts.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np
import scipy.linalg as sla

from .spectrum import Spectrum, residual_norms


@nb.njit(cache=True)
def _tred2(W, d, e):
    """Householder tridiagonalization.  W holds the transpose of the working matrix."""
    n = W.shape[0]
    for j in range(n):
        d[j] = W[j, n - 1]
    for i in range(n - 1, 0, -1):
        scale = 0.0
        h = 0.0
        for k in range(i):
            scale += abs(d[k])
        if scale == 0.0:
            e[i] = d[i - 1]
            for j in range(i):
                d[j] = W[j, i - 1]
                W[j, i] = 0.0
                W[i, j] = 0.0
        else:
            for k in range(i):
                d[k] /= scale
                h += d[k] * d[k]
            f = d[i - 1]
            g = math.sqrt(h)
            if f > 0:
                g = -g
            e[i] = scale * g
            h = h - f * g
            d[i - 1] = f - g
            for j in range(i):
                e[j] = 0.0
            for j in range(i):
                f = d[j]
                W[i, j] = f
                g = e[j] + W[j, j] * f
                for k in range(j + 1, i):
                    g += W[j, k] * d[k]
                    e[k] += W[j, k] * f
                e[j] = g
            f = 0.0
            for j in range(i):
                e[j] /= h
                f += e[j] * d[j]
            hh = f / (h + h)
            for j in range(i):
                e[j] -= hh * d[j]
            for j in range(i):
                f = d[j]
                g = e[j]
                for k in range(j, i):
                    W[j, k] -= f * e[k] + g * d[k]
                d[j] = W[j, i - 1]
                W[j, i] = 0.0
        d[i] = h
    for i in range(n - 1):
        W[i, n - 1] = W[i, i]
        W[i, i] = 1.0
        h = d[i + 1]
        if h != 0.0:
            for k in range(i + 1):
                d[k] = W[i + 1, k] / h
            for j in range(i + 1):
                g = 0.0
                for k in range(i + 1):
                    g += W[i + 1, k] * W[j, k]
                for k in range(i + 1):
                    W[j, k] -= g * d[k]
        for k in range(i + 1):
            W[i + 1, k] = 0.0
    for j in range(n):
        d[j] = W[j, n - 1]
        W[j, n - 1] = 0.0
    W[n - 1, n - 1] = 1.0
    e[0] = 0.0


@nb.njit(cache=True)
def _tql2(W, d, e, max_sweeps):
    """Implicit QL on the tridiagonal (d, e); rotations accumulated into rows of W."""
    n = W.shape[0]
    for i in range(1, n):
        e[i - 1] = e[i]
    e[n - 1] = 0.0
    f = 0.0
    tst1 = 0.0
    eps = 2.0 ** -52
    for l in range(n):
        tst1 = max(tst1, abs(d[l]) + abs(e[l]))
        m = l
        while m < n:
            if abs(e[m]) <= eps * tst1:
                break
            m += 1
        if m > l:
            it = 0
            while True:
                it += 1
                if it > max_sweeps:
                    return False
                g = d[l]
                p = (d[l + 1] - g) / (2.0 * e[l])
                r = math.hypot(p, 1.0)
                if p < 0:
                    r = -r
                d[l] = e[l] / (p + r)
                d[l + 1] = e[l] * (p + r)
                dl1 = d[l + 1]
                h = g - d[l]
                for i in range(l + 2, n):
                    d[i] -= h
                f += h
                p = d[m]
                c = 1.0
                c2 = c
                c3 = c
                el1 = e[l + 1]
                s = 0.0
                s2 = 0.0
                for i in range(m - 1, l - 1, -1):
                    c3 = c2
                    c2 = c
                    s2 = s
                    g = c * e[i]
                    h = c * p
                    r = math.hypot(p, e[i])
                    e[i + 1] = s * r
                    s = e[i] / r
                    c = p / r
                    p = c * d[i] - s * g
                    d[i + 1] = h + s * (c * g + s * d[i])
                    for k in range(n):
                        h = W[i + 1, k]
                        W[i + 1, k] = s * W[i, k] + c * h
                        W[i, k] = c * W[i, k] - s * h
                p = -s * s2 * c3 * el1 * e[l] / dl1
                e[l] = s * p
                d[l] = c * p
                if abs(e[l]) <= eps * tst1:
                    break
        d[l] = d[l] + f
        e[l] = 0.0
    return True


def symmetric_eigh(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a dense symmetric matrix."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    W = np.ascontiguousarray(0.5 * (S + S.T)).T.copy()
    d = np.zeros(n)
    e = np.zeros(n)
    _tred2(W, d, e)
    if not _tql2(W, d, e, 60):
        raise np.linalg.LinAlgError("QL iteration did not converge")
    order = np.argsort(d, kind="stable")
    return d[order], W[order].T.copy()


def dense_solve(A, M) -> Spectrum:
    """Full spectrum of the pencil (A, M) with M-orthonormal eigenvectors."""
    Ad = A.to_dense() if hasattr(A, "to_dense") else np.asarray(A, dtype=float)
    Md = M.to_dense() if hasattr(M, "to_dense") else np.asarray(M, dtype=float)
    Ad = np.atleast_2d(Ad)
    Md = np.atleast_2d(Md)
    if Ad.shape != Md.shape:
        raise ValueError("A and M must have the same shape")
    try:
        L = np.linalg.cholesky(Md)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("M is not symmetric positive definite") from exc
    half = sla.solve_triangular(L, Ad, lower=True)
    S = sla.solve_triangular(L, half.T, lower=True)
    lam, Z = symmetric_eigh(S)
    X = sla.solve_triangular(L.T, Z, lower=False)
    return Spectrum(lam, X, residual_norms(Ad, Md, lam, X))
