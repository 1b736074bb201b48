"""Finite element vector fields: interpolation, evaluation, quadrature-point values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..geometry import AnalyticVectorField, MetricField, covariant_derivative
from ..mesh import Triangulation
from .dofmap import DofMap
from .quadrature import QuadratureRule, quadrature_degree5


class PointOutsideMeshError(ValueError):
    pass


@dataclass
class DiscreteField:
    values: np.ndarray  # (n_dofs,)
    mesh: Triangulation
    dofmap: DofMap

    @property
    def element(self):
        return self.dofmap.element

    def node_values(self) -> np.ndarray:
        return self.dofmap.expand(self.values)

    def element_coefficients(self) -> np.ndarray:
        """(T, n_local, 2) nodal values per triangle in that triangle's frame."""
        return self.node_values()[self.dofmap.element_nodes]

    def at_quadrature(self, rule: QuadratureRule | None = None):
        """Values (T, Q, 2) and partials du[..., k, j] = d_j u^k at rule points."""
        rule = rule or quadrature_degree5()
        P = self.mesh.vertices[self.mesh.triangles]
        J = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=-1)
        Jinv = np.linalg.inv(J)
        coef = self.element_coefficients()
        phi = self.element.values(rule.points)
        dphi = np.einsum("qna,taj->tqnj", self.element.gradients(rule.points), Jinv)
        u = np.einsum("qn,tnk->tqk", phi, coef)
        du = np.einsum("tqnj,tnk->tqkj", dphi, coef)
        return u, du

    def evaluate(self, points, tol: float = 1e-12):
        """Value (P, 2) and partial derivatives (P, 2, 2) at arbitrary chart points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tri, bary = locate(self.mesh, pts, tol)
        coef = self.element_coefficients()[tri]  # (P, n, 2)
        phi = self.element.values(bary)
        P = self.mesh.vertices[self.mesh.triangles[tri]]
        J = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=-1)
        dphi = np.einsum("pna,paj->pnj", self.element.gradients(bary), np.linalg.inv(J))
        return np.einsum("pn,pnk->pk", phi, coef), np.einsum("pnj,pnk->pkj", dphi, coef)

    def covariant(self, metric: MetricField, points):
        u, du = self.evaluate(points)
        return covariant_derivative(metric, np.atleast_2d(points), u, du)


def locate(mesh: Triangulation, points, tol: float = 1e-12):
    """Containing triangle and barycentric coordinates for each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    P = mesh.vertices[mesh.triangles]
    centroids = P.mean(axis=1)
    k = min(24, mesh.n_triangles)
    _, cand = cKDTree(centroids).query(pts, k=k)
    cand = cand.reshape(len(pts), -1)
    tri = -np.ones(len(pts), dtype=np.int64)
    bary = np.zeros((len(pts), 3))
    scale = np.ptp(mesh.vertices, axis=0).max()

    def coords(p, ts):
        v0 = P[ts, 0]
        J = np.stack([P[ts, 1] - v0, P[ts, 2] - v0], axis=-1)
        xe = np.linalg.solve(J, (p - v0)[..., None])[..., 0]
        return np.concatenate([1.0 - xe.sum(-1, keepdims=True), xe], axis=-1)

    for i, p in enumerate(pts):
        for ts in (cand[i], np.arange(mesh.n_triangles)):
            b = coords(p, ts)
            ok = np.flatnonzero(b.min(axis=1) >= -tol * max(scale, 1.0))
            if len(ok):
                j = ok[np.argmax(b[ok].min(axis=1))]
                tri[i] = ts[j]
                bary[i] = b[j]
                break
        else:
            raise PointOutsideMeshError(f"point {p.tolist()} is not in the mesh")
    return tri, bary


def interpolate(field: AnalyticVectorField, mesh: Triangulation, dofmap: DofMap) -> DiscreteField:
    """Nodal interpolant; each node class takes the field value at its representative."""
    reps = dofmap.representatives()
    node_vals = np.zeros((dofmap.n_nodes, 2))
    node_vals[reps] = field.u(dofmap.node_coords[reps])
    return DiscreteField(dofmap.restrict(node_vals), mesh, dofmap)


def from_node_values(node_values, mesh: Triangulation, dofmap: DofMap) -> DiscreteField:
    return DiscreteField(dofmap.restrict(node_values), mesh, dofmap)
