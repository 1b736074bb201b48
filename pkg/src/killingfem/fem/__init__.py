"""Reference elements, quadrature, dof numbering and matrix assembly."""

from .assembly import (ElementGeometry, SystemMatrices, assemble_all, assemble_conformal,
                       assemble_killing, assemble_mass, constrain, element_killing, element_mass)
from .dofmap import DofMap
from .elements import P1, P2, ReferenceElement, element_from_name
from .field import DiscreteField, PointOutsideMeshError, from_node_values, interpolate, locate
from .quadrature import QuadratureRule, gauss_legendre_segment, quadrature_degree5
from .sparse import SymSparseMatrix

__all__ = [
    "DiscreteField", "DofMap", "ElementGeometry", "P1", "P2", "PointOutsideMeshError",
    "QuadratureRule", "ReferenceElement", "SymSparseMatrix", "SystemMatrices", "assemble_all",
    "assemble_conformal", "assemble_killing", "assemble_mass", "constrain", "element_from_name",
    "element_killing", "element_mass",
    "from_node_values", "gauss_legendre_segment", "interpolate", "locate", "quadrature_degree5",
]
