"""Lagrange P1 / P2 scalar shape functions on the unit triangle.

Local node order: the three vertices, then (P2) the midpoints of the edges
(0,1), (1,2), (2,0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# local vertex pairs of the P2 edge nodes
EDGE_VERTICES = np.array([[0, 1], [1, 2], [2, 0]])


@dataclass(frozen=True)
class ReferenceElement:
    order: int

    @property
    def name(self) -> str:
        return f"P{self.order}"

    @property
    def n_nodes(self) -> int:
        return 3 if self.order == 1 else 6

    @property
    def nodes(self) -> np.ndarray:
        """Barycentric coordinates of the local nodes, shape (n_nodes, 3)."""
        verts = np.eye(3)
        if self.order == 1:
            return verts
        mids = 0.5 * (verts[EDGE_VERTICES[:, 0]] + verts[EDGE_VERTICES[:, 1]])
        return np.vstack([verts, mids])

    def values(self, bary) -> np.ndarray:
        """Shape functions at barycentric points, shape (..., n_nodes)."""
        lam = np.asarray(bary, dtype=float)
        if self.order == 1:
            return lam.copy()
        l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
        return np.stack([
            l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
            4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
        ], axis=-1)

    def gradients(self, bary) -> np.ndarray:
        """Gradients with respect to (xi, eta) on the unit triangle, shape (..., n_nodes, 2)."""
        lam = np.asarray(bary, dtype=float)
        # d lambda_i / d(xi, eta)
        dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        if self.order == 1:
            return np.broadcast_to(dlam, lam.shape[:-1] + (3, 2)).copy()
        out = np.empty(lam.shape[:-1] + (6, 2))
        for i in range(3):
            out[..., i, :] = (4 * lam[..., i] - 1)[..., None] * dlam[i]
        for e, (i, j) in enumerate(EDGE_VERTICES):
            out[..., 3 + e, :] = 4 * (lam[..., i, None] * dlam[j] + lam[..., j, None] * dlam[i])
        return out


P1 = ReferenceElement(1)
P2 = ReferenceElement(2)


def element_from_name(name: str) -> ReferenceElement:
    key = name.upper()
    if key == "P1":
        return P1
    if key == "P2":
        return P2
    raise ValueError(f"unknown element {name!r}; expected P1 or P2")
