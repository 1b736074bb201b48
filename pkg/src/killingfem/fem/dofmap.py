"""Global numbering of vector degrees of freedom under side gluings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import Gluing
from ..mesh import Triangulation, VertexIdentification, identify_points
from .elements import ReferenceElement


def node_coordinates(mesh: Triangulation, element: ReferenceElement) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates of all Lagrange nodes and the (T, n_local) element-to-node table.

    P2 edge nodes are numbered after the vertices, in the order of ``mesh.edges()``.
    """
    if element.order == 1:
        return mesh.vertices.copy(), mesh.triangles.copy()
    edges, tri_edges = mesh.edges()
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    coords = np.vstack([mesh.vertices, mids])
    return coords, np.hstack([mesh.triangles, mesh.n_vertices + tri_edges])


@dataclass
class DofMap:
    """Component-interleaved dof numbering with identification signs.

    ``dof[node, c]`` is the global index of component c at a node (-1 when the
    component is eliminated) and ``component_sign[node, c]`` the factor that
    converts the class value into this node's chart frame.
    """

    element: ReferenceElement
    gluing: Gluing
    node_coords: np.ndarray
    element_nodes: np.ndarray  # (T, n_local)
    node_class: np.ndarray
    component_sign: np.ndarray
    dof: np.ndarray
    n_dofs: int

    @classmethod
    def build(cls, mesh: Triangulation, element: ReferenceElement,
              gluing: Gluing = Gluing.NONE, tol: float = 1e-9) -> "DofMap":
        coords, elem_nodes = node_coordinates(mesh, element)
        vid: VertexIdentification = identify_points(coords, gluing, tol)
        cls_idx = vid.class_index()
        n_cls = int(cls_idx.max()) + 1 if len(cls_idx) else 0
        # one representative per class, in class order
        reps = np.zeros(n_cls, dtype=np.int64)
        reps[cls_idx] = vid.representative
        keep = ~vid.dropped[reps]  # (n_cls, 2)
        numbering = -np.ones((n_cls, 2), dtype=np.int64)
        numbering[keep] = np.arange(int(keep.sum()))
        return cls(element, gluing, coords, elem_nodes, cls_idx, vid.signs,
                   numbering[cls_idx], int(keep.sum()))

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def n_classes(self) -> int:
        return int(self.node_class.max()) + 1

    def element_dofs(self) -> tuple[np.ndarray, np.ndarray]:
        """(T, 2 n_local) dof indices and signs, local order (node 0 c0, node 0 c1, node 1 c0, ...)."""
        d = self.dof[self.element_nodes]
        s = self.component_sign[self.element_nodes]
        s = np.where(d < 0, 0.0, s)
        T = len(self.element_nodes)
        return d.reshape(T, -1), s.reshape(T, -1)

    def representatives(self) -> np.ndarray:
        """Node index of the representative of each class."""
        reps = np.zeros(self.n_classes, dtype=np.int64)
        # the first node seen for each class is its smallest index
        order = np.arange(self.n_nodes)[::-1]
        reps[self.node_class[order]] = order
        return reps

    def expand(self, coefficients) -> np.ndarray:
        """Per-node vector values (n_nodes, 2) in each node's own chart frame."""
        x = np.asarray(coefficients, dtype=float)
        vals = np.where(self.dof >= 0, x[np.maximum(self.dof, 0)], 0.0)
        return vals * self.component_sign

    def restrict(self, node_values) -> np.ndarray:
        """Coefficient vector from per-node values, read at class representatives."""
        nv = np.asarray(node_values, dtype=float)
        out = np.zeros(self.n_dofs)
        reps = self.representatives()
        d = self.dof[reps]
        vals = nv[reps] * self.component_sign[reps]
        mask = d >= 0
        out[d[mask]] = vals[mask]
        return out
