"""Element integrals of the mass and (conformal) Killing forms, scattered with signs.

Every integral uses the degree-5 rule with the metric and Christoffel symbols
sampled in closed form at the physical quadrature points.  A vector basis
function is a scalar shape function times a coordinate direction, so local
matrices are indexed by (node, component) pairs flattened node-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import MetricField, christoffel, metric_inverse
from ..mesh import Triangulation
from .dofmap import DofMap
from .elements import ReferenceElement
from .quadrature import QuadratureRule, quadrature_degree5
from .sparse import SymSparseMatrix


@dataclass
class ElementGeometry:
    """Per-triangle, per-quadrature-point data shared by all assemblers."""

    points: np.ndarray  # (T, Q, 2) physical quadrature points
    weights: np.ndarray  # (T, Q) rule weight * triangle area * sqrt(det g)
    phi: np.ndarray  # (Q, n) shape values
    dphi: np.ndarray  # (T, Q, n, 2) physical shape gradients
    g: np.ndarray  # (T, Q, 2, 2)
    ginv: np.ndarray
    gamma: np.ndarray  # (T, Q, k, i, j)

    @classmethod
    def build(cls, mesh: Triangulation, metric: MetricField, element: ReferenceElement,
              rule: QuadratureRule | None = None) -> "ElementGeometry":
        rule = rule or quadrature_degree5()
        P = mesh.vertices[mesh.triangles]  # (T, 3, 2)
        J = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=-1)  # columns: d x / d(xi, eta)
        detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        Jinv = np.linalg.inv(J)
        x = np.einsum("qa,tad->tqd", rule.points, P)
        ginv, det = metric_inverse(metric, x)
        weights = rule.weights * (0.5 * np.abs(detJ))[:, None] * np.sqrt(det)
        phi = element.values(rule.points)
        dref = element.gradients(rule.points)  # (Q, n, 2)
        dphi = np.einsum("qna,taj->tqnj", dref, Jinv)
        return cls(x, weights, phi, dphi, metric.g(x), ginv, christoffel(metric, x))

    def basis_derivatives(self) -> np.ndarray:
        """Covariant derivative of every vector basis function, shape (T, Q, n, 2, 2, 2).

        Index order (T, Q, node, component c, k, j): D[k, j] = u^k_{;j} for the
        field whose only nonzero component c equals the shape function.
        """
        T, Q, n, _ = self.dphi.shape
        D = np.zeros((T, Q, n, 2, 2, 2))
        for c in range(2):
            D[:, :, :, c, c, :] += self.dphi
            D[:, :, :, c, :, :] += self.phi[None, :, :, None, None] * self.gamma[:, :, None, :, c, :]
        return D


def _scatter(dofmap: DofMap, local: np.ndarray) -> SymSparseMatrix:
    dofs, signs = dofmap.element_dofs()
    T, m = dofs.shape
    vals = local * signs[:, :, None] * signs[:, None, :]
    rows = np.broadcast_to(dofs[:, :, None], (T, m, m))
    cols = np.broadcast_to(dofs[:, None, :], (T, m, m))
    keep = (rows >= 0) & (cols >= 0)
    return SymSparseMatrix.from_entries(dofmap.n_dofs, rows[keep], cols[keep], vals[keep])


def constrain(dofmap: DofMap, element_matrices: np.ndarray) -> SymSparseMatrix:
    """Scatter (T, 2n, 2n) element matrices into the reduced global matrix.

    Entry (dof(a), dof(b)) accumulates sign(a) sign(b) local(a, b); eliminated
    components are skipped.
    """
    dofs, _ = dofmap.element_dofs()
    if element_matrices.shape != (dofs.shape[0], dofs.shape[1], dofs.shape[1]):
        raise ValueError("element matrices do not match the dof map")
    return _scatter(dofmap, element_matrices)


def element_mass(geo: ElementGeometry) -> np.ndarray:
    T, Q, n, _ = geo.dphi.shape
    loc = np.einsum("tq,qa,qb,tqcd->tacbd", geo.weights, geo.phi, geo.phi, geo.g)
    return loc.reshape(T, 2 * n, 2 * n)


def element_killing(geo: ElementGeometry, conformal: bool = False) -> np.ndarray:
    """Local matrices of the integrand g(grad u, grad v) + tr(grad u grad v) [- div u div v]."""
    T, Q, n, _ = geo.dphi.shape
    D = geo.basis_derivatives().reshape(T, Q, 2 * n, 2, 2)
    # g(A, B) = sum_{lm} (G A G^{-1})_{lm} B_{lm};  tr(A B) = sum (A^T)_{lm} B_{lm}
    left = np.einsum("tqlk,tqakj,tqjm->tqalm", geo.g, D, geo.ginv) + np.swapaxes(D, -1, -2)
    loc = np.einsum("tq,tqalm,tqblm->tab", geo.weights, left, D)
    if conformal:
        div = np.trace(D, axis1=-2, axis2=-1)  # (T, Q, 2n); n = 2 so 2/n = 1
        loc -= np.einsum("tq,tqa,tqb->tab", geo.weights, div, div)
    return loc


def assemble_mass(mesh: Triangulation, metric: MetricField, element: ReferenceElement,
                  dofmap: DofMap, geometry: ElementGeometry | None = None) -> SymSparseMatrix:
    geo = geometry or ElementGeometry.build(mesh, metric, element)
    return _scatter(dofmap, element_mass(geo))


def assemble_killing(mesh: Triangulation, metric: MetricField, element: ReferenceElement,
                     dofmap: DofMap, geometry: ElementGeometry | None = None) -> SymSparseMatrix:
    geo = geometry or ElementGeometry.build(mesh, metric, element)
    return _scatter(dofmap, element_killing(geo))


def assemble_conformal(mesh: Triangulation, metric: MetricField, element: ReferenceElement,
                       dofmap: DofMap, geometry: ElementGeometry | None = None) -> SymSparseMatrix:
    geo = geometry or ElementGeometry.build(mesh, metric, element)
    return _scatter(dofmap, element_killing(geo, conformal=True))


@dataclass
class SystemMatrices:
    mass: SymSparseMatrix
    killing: SymSparseMatrix
    conformal: SymSparseMatrix
    dofmap: DofMap
    geometry: ElementGeometry

    def stiffness(self, problem: str) -> SymSparseMatrix:
        key = problem.upper()
        if key == "K":
            return self.killing
        if key == "CK":
            return self.conformal
        raise ValueError(f"unknown problem {problem!r}; expected 'K' or 'CK'")


def assemble_all(mesh: Triangulation, metric: MetricField, element: ReferenceElement,
                 dofmap: DofMap) -> SystemMatrices:
    geo = ElementGeometry.build(mesh, metric, element)
    return SystemMatrices(
        mass=_scatter(dofmap, element_mass(geo)),
        killing=_scatter(dofmap, element_killing(geo)),
        conformal=_scatter(dofmap, element_killing(geo, conformal=True)),
        dofmap=dofmap,
        geometry=geo,
    )
