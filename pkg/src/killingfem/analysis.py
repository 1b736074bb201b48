"""Error norms against analytic fields, convergence orders and the Ricci identity."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .fem.field import DiscreteField
from .fem.quadrature import QuadratureRule, quadrature_degree5
from .geometry import (AnalyticVectorField, MetricField, christoffel, gaussian_curvature,
                       metric_inverse)
from .mesh import Triangulation

NORMS = ("L2", "H1")


class DegenerateSpanError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


@dataclass
class QuadratureData:
    """Quadrature points of a mesh with the metric quantities every integral needs."""

    points: np.ndarray  # (T, Q, 2)
    weights: np.ndarray  # (T, Q), includes sqrt(det g)
    g: np.ndarray
    ginv: np.ndarray
    gamma: np.ndarray

    @classmethod
    def build(cls, mesh: Triangulation, metric: MetricField,
              rule: QuadratureRule | None = None) -> "QuadratureData":
        rule = rule or quadrature_degree5()
        P = mesh.vertices[mesh.triangles]
        x = np.einsum("qa,tad->tqd", rule.points, P)
        ginv, det = metric_inverse(metric, x)
        area = np.abs(mesh.signed_areas())
        return cls(x, rule.weights * area[:, None] * np.sqrt(det), metric.g(x), ginv,
                   christoffel(metric, x))


def _samples(f, mesh: Triangulation, qd: QuadratureData):
    """Values (T, Q, 2) and partial derivatives (T, Q, 2, 2) of a field at quadrature points."""
    if isinstance(f, DiscreteField):
        return f.at_quadrature()
    if isinstance(f, AnalyticVectorField):
        return f.u(qd.points), f.du(qd.points)
    u, du = f  # already sampled
    return np.asarray(u), np.asarray(du)


def _covariant(qd: QuadratureData, u, du):
    return du + np.einsum("...kij,...i->...kj", qd.gamma, u)


def _gram(qd: QuadratureData, fields_u, fields_nabla, norm: str) -> np.ndarray:
    """Matrix of inner products between sampled fields in the chosen norm."""
    U = np.stack(fields_u)  # (F, T, Q, 2)
    Gu = np.einsum("tqij,ftqj->ftqi", qd.g, U)
    out = np.einsum("tq,ftqi,htqi->fh", qd.weights, Gu, U)
    if norm == "H1":
        N = np.stack(fields_nabla)  # (F, T, Q, 2, 2)
        left = np.einsum("tqlk,ftqkj,tqjm->ftqlm", qd.g, N, qd.ginv)
        out = out + np.einsum("tq,ftqlm,htqlm->fh", qd.weights, left, N)
    return out


def _check_norm(norm: str) -> str:
    key = norm.upper()
    if key not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}")
    return key


def norm(f, mesh: Triangulation, metric: MetricField, kind: str = "L2",
         qd: QuadratureData | None = None) -> float:
    kind = _check_norm(kind)
    qd = qd or QuadratureData.build(mesh, metric)
    u, du = _samples(f, mesh, qd)
    val = _gram(qd, [u], [_covariant(qd, u, du)], kind)[0, 0]
    return math.sqrt(max(val, 0.0))


def l2_norm(f, mesh: Triangulation, metric: MetricField) -> float:
    """sqrt of the integral of g(u, u) against the Riemannian density."""
    return norm(f, mesh, metric, "L2")


def h1_norm(f, mesh: Triangulation, metric: MetricField) -> float:
    """sqrt of the integral of g(u, u) + g(nabla u, nabla u)."""
    return norm(f, mesh, metric, "H1")


def span_projection(computed: Sequence, exact, mesh: Triangulation, metric: MetricField,
                    kind: str = "L2", qd: QuadratureData | None = None):
    """Best approximation of one exact field by the span of computed fields.

    Returns (relative error, coefficients).  The residual is sampled and
    integrated directly, never obtained by subtracting squared norms.
    """
    kind = _check_norm(kind)
    qd = qd or QuadratureData.build(mesh, metric)
    samp = [_samples(c, mesh, qd) for c in computed]
    us = [s[0] for s in samp]
    dus = [s[1] for s in samp]
    nablas = [_covariant(qd, u, du) for u, du in samp]
    eu, edu = _samples(exact, mesh, qd)
    enab = _covariant(qd, eu, edu)
    G = _gram(qd, us, nablas, kind)
    rhs = _gram(qd, us + [eu], nablas + [enab], kind)[:-1, -1]
    scale = np.sqrt(np.clip(np.diag(G), 1e-300, None))
    Gs = G / np.outer(scale, scale)
    w = np.linalg.eigvalsh(Gs)
    if w[0] <= 1e-12 * w[-1]:
        raise DegenerateSpanError("computed fields are linearly dependent in this norm")
    coef = np.linalg.solve(Gs, rhs / scale) / scale
    ru = sum(c * u for c, u in zip(coef, us)) - eu
    rdu = sum(c * d for c, d in zip(coef, dus)) - edu
    err = math.sqrt(max(_gram(qd, [ru], [_covariant(qd, ru, rdu)], kind)[0, 0], 0.0))
    ref = math.sqrt(_gram(qd, [eu], [enab], kind)[0, 0])
    return err / ref, coef


def subspace_error(computed: Sequence, exact: Sequence, mesh: Triangulation, metric: MetricField,
                   norm: str = "L2") -> np.ndarray:
    """Relative distance of each exact field from span(computed) in the L2 or H1 norm."""
    if not computed or not exact:
        raise ValueError("need at least one computed and one exact field")
    qd = QuadratureData.build(mesh, metric)
    return np.array([span_projection(computed, e, mesh, metric, norm, qd)[0] for e in exact])


@dataclass
class ErrorReport:
    name: str
    l2_rel: float
    h1_rel: float
    eigenvalue: float
    alignment: np.ndarray

    def to_dict(self) -> dict:
        return {"field": self.name, "l2_rel": self.l2_rel, "h1_rel": self.h1_rel,
                "eigenvalue": self.eigenvalue, "alignment": [float(a) for a in self.alignment]}


def error_report(name: str, computed: Sequence, exact, mesh: Triangulation, metric: MetricField,
                 eigenvalue: float) -> ErrorReport:
    qd = QuadratureData.build(mesh, metric)
    l2, coef = span_projection(computed, exact, mesh, metric, "L2", qd)
    h1, _ = span_projection(computed, exact, mesh, metric, "H1", qd)
    return ErrorReport(name, float(l2), float(h1), float(eigenvalue), coef)


# ---------------------------------------------------------------------------
# convergence


def fit_order(h, errors, min_rows: int = 4) -> float:
    """Least-squares slope of log(error) against log(h), ignoring nonpositive errors."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    ok = (e > 0) & np.isfinite(e) & (h > 0)
    if ok.sum() < min_rows:
        raise InsufficientDataError(f"need {min_rows} positive errors, have {int(ok.sum())}")
    slope, _ = np.polyfit(np.log(h[ok]), np.log(e[ok]), 1)
    return float(slope)


COLUMNS = ("eigenvalue", "l2_rel", "h1_rel")


@dataclass
class ConvergenceRow:
    h: float
    ntri: int
    eigenvalue: float
    l2_rel: float
    h1_rel: float
    label: str = ""


@dataclass
class ConvergenceStudy:
    """Error columns on a mesh sequence and their fitted orders.

    A column is *saturated* when every entry is at or below ``floor``: the
    errors are rounding noise and the fitted slope carries no information.
    Runs that failed are kept in ``failures`` as ``(label, category)`` pairs;
    they take no part in the fits.
    """

    name: str
    rows: list[ConvergenceRow] = field(default_factory=list)
    floor: float = 1e-12
    failures: list[tuple[str, str]] = field(default_factory=list)

    def add(self, row: ConvergenceRow) -> None:
        self.rows.append(row)
        self.rows.sort(key=lambda r: -r.h)

    def add_failure(self, label: str, category: str) -> None:
        self.failures.append((str(label), str(category)))

    def column(self, key: str) -> np.ndarray:
        return np.array([abs(getattr(r, key)) for r in self.rows])

    @property
    def h(self) -> np.ndarray:
        return np.array([r.h for r in self.rows])

    def saturated(self, key: str) -> bool:
        return bool(np.all(self.column(key) <= self.floor))

    def fitted_orders(self) -> dict[str, float]:
        return {key: fit_order(self.h, self.column(key)) for key in COLUMNS}

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["h", "ntri", "eigenvalue", "l2_rel", "h1_rel"])
            for r in self.rows:
                out.writerow([f"{r.h:.17g}", r.ntri, f"{r.eigenvalue:.17g}", f"{r.l2_rel:.17g}",
                              f"{r.h1_rel:.17g}"])

    def write_orders_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["column", "order", "saturated"])
            for key in COLUMNS:
                try:
                    k = fit_order(self.h, self.column(key))
                except InsufficientDataError:
                    k = float("nan")
                out.writerow([key, f"{k:.17g}", int(self.saturated(key))])


# ---------------------------------------------------------------------------
# integral identity


def ricci_identity_residual(f, mesh: Triangulation, metric: MetricField,
                            kind: str = "Killing") -> float:
    """Relative defect of  int g(nabla u, nabla u) = int kappa g(u, u) [+ (1 - 2/n) div(u)^2].

    The identity holds for Killing fields (and, with the divergence term,
    for conformal Killing fields) on closed surfaces.  In two dimensions the
    divergence coefficient vanishes, so both kinds share one formula.
    """
    if kind.lower() not in ("killing", "conformal"):
        raise ValueError("kind must be 'Killing' or 'Conformal'")
    qd = QuadratureData.build(mesh, metric)
    u, du = _samples(f, mesh, qd)
    nab = _covariant(qd, u, du)
    lhs = _gram(qd, [u], [nab], "H1")[0, 0] - _gram(qd, [u], [nab], "L2")[0, 0]
    kappa = metric.kappa(qd.points) if metric.kappa is not None else gaussian_curvature(metric, qd.points)
    gu = np.einsum("tqi,tqij,tqj->tq", u, qd.g, u)
    rhs = float(np.sum(qd.weights * kappa * gu))
    if kind.lower() == "conformal":
        n = 2
        div = np.trace(nab, axis1=-2, axis2=-1)
        rhs += (1 - 2 / n) * float(np.sum(qd.weights * div**2))
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


__all__ = [
    "ConvergenceRow", "ConvergenceStudy", "DegenerateSpanError", "ErrorReport", "InsufficientDataError",
    "QuadratureData", "error_report", "fit_order", "h1_norm", "l2_norm", "norm", "ricci_identity_residual",
    "span_projection", "subspace_error",
]
