"""Legacy ASCII VTK export of vector fields on the parameter domain."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fem.dofmap import DofMap
from .mesh import Triangulation


def display_triangulation(mesh: Triangulation, dofmap: DofMap) -> tuple[np.ndarray, np.ndarray]:
    """Points and triangles on which nodal values are drawn (P2: each triangle split in 4)."""
    if dofmap.element.order == 1:
        return mesh.vertices, mesh.triangles
    en = dofmap.element_nodes  # v0 v1 v2 m01 m12 m20
    tris = np.concatenate([
        en[:, [0, 3, 5]], en[:, [3, 1, 4]], en[:, [5, 4, 2]], en[:, [3, 4, 5]],
    ])
    return dofmap.node_coords, tris


def write_vtk(path, mesh: Triangulation, dofmap: DofMap, fields: dict[str, np.ndarray],
              title: str = "vector fields") -> None:
    """Write ``fields`` (name -> per-node values of shape (n_nodes, 2)) as point vectors."""
    pts, tris = display_triangulation(mesh, dofmap)
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {len(pts)} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in pts]
    lines.append(f"CELLS {len(tris)} {4 * len(tris)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tris]
    lines.append(f"CELL_TYPES {len(tris)}")
    lines += ["5"] * len(tris)
    if fields:
        lines.append(f"POINT_DATA {len(pts)}")
        for name, values in fields.items():
            v = np.asarray(values, dtype=float)
            if v.shape != (len(pts), 2):
                raise ValueError(f"field {name!r} has shape {v.shape}, expected {(len(pts), 2)}")
            safe = "".join(ch if ch.isalnum() or ch in "_-" else "_" for ch in name) or "field"
            lines.append(f"VECTORS {safe} double")
            lines += [f"{a:.17g} {b:.17g} 0" for a, b in v]
    Path(path).write_text("\n".join(lines) + "\n")
