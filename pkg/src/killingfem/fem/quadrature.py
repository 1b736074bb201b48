"""Symmetric 7-point rule on the triangle, exact up to total degree 5."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Points in barycentric coordinates; weights sum to 1 (multiply by area)."""

    points: np.ndarray  # (Q, 3)
    weights: np.ndarray  # (Q,)
    degree: int

    @property
    def reference_points(self) -> np.ndarray:
        """Cartesian points on the unit triangle (0,0), (1,0), (0,1)."""
        return self.points[:, 1:]

    def integrate_reference(self, fn) -> float:
        """Integrate ``fn(xi, eta)`` over the unit triangle (area 1/2)."""
        xi, eta = self.reference_points.T
        return 0.5 * float(np.dot(self.weights, fn(xi, eta)))


def quadrature_degree5() -> QuadratureRule:
    r = math.sqrt(15.0)
    a1, b1 = (6.0 - r) / 21.0, (9.0 + 2.0 * r) / 21.0
    a2, b2 = (6.0 + r) / 21.0, (9.0 - 2.0 * r) / 21.0
    w1, w2 = (155.0 - r) / 1200.0, (155.0 + r) / 1200.0
    points = np.array([
        [1 / 3, 1 / 3, 1 / 3],
        [b1, a1, a1], [a1, b1, a1], [a1, a1, b1],
        [b2, a2, a2], [a2, b2, a2], [a2, a2, b2],
    ])
    weights = np.array([9 / 40, w1, w1, w1, w2, w2, w2])
    return QuadratureRule(points=points, weights=weights, degree=5)


@lru_cache(maxsize=None)
def gauss_legendre_segment(n: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1] (cached, read-only)."""
    t, w = np.polynomial.legendre.leggauss(n)
    nodes, weights = 0.5 * (t + 1.0), 0.5 * w
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights
