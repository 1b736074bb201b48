"""Closed-form Riemannian geometry of a surface given on a single chart.

Everything here is driven by a :class:`MetricField`: the metric components
``g_ij(x)`` and their first partials, optionally second partials and a
closed-form Gaussian curvature.  All point arguments may be batched: an array
of shape ``(..., 2)`` yields results with the same leading shape.

Index conventions
-----------------
``dg[..., k, i, j]``       = d_k g_ij
``d2g[..., k, l, i, j]``   = d_k d_l g_ij
``gamma[..., k, i, j]``    = Gamma^k_ij
``du[..., k, j]``          = d_j u^k
``nabla[..., k, j]``       = u^k_{;j}
Contravariant 2-tensors (``Su``, ``Cu``) are returned as ``T[..., i, k]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

ArrayFn = Callable[[np.ndarray], np.ndarray]


class DegenerateMetricError(ValueError):
    """Raised when det g <= 0 somewhere it is evaluated."""

    def __init__(self, location):
        self.location = np.asarray(location, dtype=float)
        super().__init__(f"degenerate metric (det g <= 0) at x = {self.location.tolist()}")


class UnsupportedDimensionError(NotImplementedError):
    pass


class Gluing(enum.Enum):
    """How the sides of the square chart [0, 2pi]^2 are identified."""

    NONE = "none"
    PERIODIC_BOTH = "periodic"
    KLEIN_FLIP = "klein"


class KillingDimension(enum.Enum):
    THREE_DIM = 3
    ONE_DIM = 1
    ZERO = 0


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (2,):
        raise ValueError(f"points must have trailing dimension 2, got shape {x.shape}")
    return x


def _central_jacobian(fn: ArrayFn, x: np.ndarray, h: float) -> np.ndarray:
    """Second-order central differences; new axis inserted before the output axes."""
    parts = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        parts.append((fn(x + e) - fn(x - e)) / (2.0 * h))
    return np.stack(parts, axis=x.ndim - 1)


@dataclass(frozen=True)
class MetricField:
    """Metric on a 2D chart.

    ``g``, ``dg`` and ``d2g`` follow the index layout in the module docstring.
    When ``d2g`` is omitted it is produced by central differences of ``dg`` with
    step ``fd_step``.  ``kappa`` is an optional closed-form Gaussian curvature
    used to cross-check the Brioschi formula and to differentiate curvature.
    """

    g: ArrayFn
    dg: ArrayFn
    d2g: ArrayFn | None = None
    kappa: Callable[[np.ndarray], np.ndarray] | None = None
    dim: int = 2
    fd_step: float = 1e-5

    def second_derivatives(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.d2g is not None:
            return self.d2g(x)
        return _central_jacobian(self.dg, x, self.fd_step)


@dataclass(frozen=True)
class AnalyticVectorField:
    """A vector field given by closed forms; ``du[..., k, j] = d_j u^k``."""

    u: ArrayFn
    du: ArrayFn
    name: str = ""

    def __call__(self, x) -> np.ndarray:
        return self.u(_as_points(x))


@dataclass(frozen=True)
class BoundaryCurve:
    fn: Callable[[np.ndarray], np.ndarray]
    t0: float
    t1: float
    tag: int

    def sample(self, n: int) -> np.ndarray:
        return self.fn(np.linspace(self.t0, self.t1, n + 1))

    def length(self, n: int = 2048) -> float:
        p = self.sample(n)
        return float(np.sum(np.hypot(*np.diff(p, axis=0).T)))


def _segments_intersect(p: np.ndarray) -> bool:
    """True if any two non-adjacent edges of the closed polygon ``p`` cross."""
    a = p
    b = np.roll(p, -1, axis=0)
    n = len(p)

    def orient(p0, p1, p2):
        return np.sign((p1[..., 0] - p0[..., 0]) * (p2[..., 1] - p0[..., 1])
                       - (p1[..., 1] - p0[..., 1]) * (p2[..., 0] - p0[..., 0]))

    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    o1 = orient(a[i], b[i], a[j])
    o2 = orient(a[i], b[i], b[j])
    o3 = orient(a[j], b[j], a[i])
    o4 = orient(a[j], b[j], b[i])
    return bool(np.any((o1 * o2 < 0) & (o3 * o4 < 0)))


@dataclass
class ChartDomain:
    """Either an axis-aligned rectangle or a closed loop of parametric curves."""

    rectangle: tuple[float, float, float, float] | None = None
    boundary: list[BoundaryCurve] = field(default_factory=list)
    identification: Gluing = Gluing.NONE

    def __post_init__(self):
        if self.rectangle is None and not self.boundary:
            raise ValueError("chart domain needs a rectangle or boundary curves")
        if self.rectangle is not None:
            a, b, c, d = self.rectangle
            if not (b > a and d > c):
                raise ValueError(f"degenerate rectangle {self.rectangle}")
        else:
            ends = [(crv.fn(np.array([crv.t0]))[0], crv.fn(np.array([crv.t1]))[0])
                    for crv in self.boundary]
            for (_, end), (start, _) in zip(ends, ends[1:] + ends[:1]):
                if np.linalg.norm(end - start) > 1e-9:
                    raise ValueError("boundary curves do not form a closed loop")
            if _segments_intersect(self.polygon(32)):
                raise ValueError("boundary loop self-intersects")
        if self.identification is not Gluing.NONE:
            if self.rectangle is None or not np.allclose(self.rectangle, (0, TWO_PI, 0, TWO_PI)):
                raise ValueError("periodic and Klein gluings require the chart [0, 2pi]^2")

    @property
    def is_rectangle(self) -> bool:
        return self.rectangle is not None

    def polygon(self, per_curve: int = 256) -> np.ndarray:
        """Counterclockwise boundary polygon without the repeated closing point."""
        if self.rectangle is not None:
            a, b, c, d = self.rectangle
            return np.array([[a, c], [b, c], [b, d], [a, d]], dtype=float)
        return np.concatenate([crv.sample(per_curve)[:-1] for crv in self.boundary])

    def area(self) -> float:
        p = self.polygon(4096)
        x, y = p[:, 0], p[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def contains(self, points, margin: float = 0.0) -> np.ndarray:
        """Point-in-polygon test; ``margin`` > 0 also requires that distance from the boundary."""
        pts = _as_points(points).reshape(-1, 2)
        poly = self.polygon(512)
        a = poly
        b = np.roll(poly, -1, axis=0)
        px, py = pts[:, 0:1], pts[:, 1:2]
        cond = (a[:, 1] > py) != (b[:, 1] > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = a[:, 0] + (py - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
        inside = np.sum(cond & (px < xcross), axis=1) % 2 == 1
        if margin > 0:
            ab = b - a
            t = ((px - a[:, 0]) * ab[:, 0] + (py - a[:, 1]) * ab[:, 1]) / np.sum(ab * ab, axis=1)
            t = np.clip(t, 0.0, 1.0)
            dx = a[:, 0] + t * ab[:, 0] - px
            dy = a[:, 1] + t * ab[:, 1] - py
            inside &= np.min(np.hypot(dx, dy), axis=1) >= margin
        return inside.reshape(np.shape(points)[:-1])

    def sample_interior(self, n: int, rng: np.random.Generator, margin: float = 1e-3) -> np.ndarray:
        poly = self.polygon(64)
        lo, hi = poly.min(axis=0), poly.max(axis=0)
        out = np.empty((0, 2))
        while len(out) < n:
            cand = rng.uniform(lo, hi, size=(4 * n, 2))
            out = np.concatenate([out, cand[self.contains(cand, margin=margin)]])
        return out[:n]


@dataclass
class Manifold:
    name: str
    chart: ChartDomain
    metric: MetricField
    known_killing: list[AnalyticVectorField] = field(default_factory=list)
    known_conformal_killing: list[AnalyticVectorField] = field(default_factory=list)

    @property
    def gluing(self) -> Gluing:
        return self.chart.identification


# ---------------------------------------------------------------------------
# pointwise tensor calculus


def _check_dim(metric: MetricField):
    if metric.dim != 2:
        raise UnsupportedDimensionError(f"only dimension 2 is implemented, got {metric.dim}")


def metric_inverse(metric: MetricField, x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(g^{-1}, det g)``; raises :class:`DegenerateMetricError`."""
    _check_dim(metric)
    x = _as_points(x)
    g = metric.g(x)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    bad = ~(det > 0)
    if np.any(bad):
        raise DegenerateMetricError(x[bad][0] if x.ndim > 1 else x)
    inv = np.empty_like(g)
    inv[..., 0, 0] = g[..., 1, 1] / det
    inv[..., 1, 1] = g[..., 0, 0] / det
    inv[..., 0, 1] = -g[..., 0, 1] / det
    inv[..., 1, 0] = -g[..., 1, 0] / det
    return inv, det


def christoffel(metric: MetricField, x) -> np.ndarray:
    """Christoffel symbols of the second kind, ``gamma[..., k, i, j]``."""
    x = _as_points(x)
    ginv, _ = metric_inverse(metric, x)
    dg = metric.dg(x)
    # first kind, lower index l first: [l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    d_i = np.moveaxis(dg, -1, -3)
    first = 0.5 * (d_i + np.swapaxes(d_i, -1, -2) - dg)
    return np.einsum("...kl,...lij->...kij", ginv, first)


def covariant_derivative(metric: MetricField, x, u_value, du_value) -> np.ndarray:
    """``u^k_{;j} = u^k_{,j} + Gamma^k_{ij} u^i``."""
    gamma = christoffel(metric, x)
    return np.asarray(du_value, dtype=float) + np.einsum("...kij,...i->...kj", gamma, u_value)


def divergence(metric: MetricField, x, u_value, du_value) -> np.ndarray:
    nabla = covariant_derivative(metric, x, u_value, du_value)
    return nabla[..., 0, 0] + nabla[..., 1, 1]


def s_operator(metric: MetricField, x, u_value, du_value) -> np.ndarray:
    """``(Su)^{ik} = g^{kj} u^i_{;j} + g^{ij} u^k_{;j}``."""
    ginv, _ = metric_inverse(metric, x)
    nabla = covariant_derivative(metric, x, u_value, du_value)
    half = np.einsum("...ij,...jk->...ik", nabla, ginv)
    return half + np.swapaxes(half, -1, -2)


def c_operator(metric: MetricField, x, u_value, du_value) -> np.ndarray:
    """Trace-free part ``Cu = Su - (2/n) div(u) g^{-1}``."""
    ginv, _ = metric_inverse(metric, x)
    nabla = covariant_derivative(metric, x, u_value, du_value)
    half = np.einsum("...ij,...jk->...ik", nabla, ginv)
    div = nabla[..., 0, 0] + nabla[..., 1, 1]
    return half + np.swapaxes(half, -1, -2) - div[..., None, None] * ginv


def contravariant_norm(metric: MetricField, x, t) -> np.ndarray:
    """Pointwise ``sqrt(g_ij g_kl T^{ik} T^{jl})`` of a contravariant 2-tensor."""
    g = metric.g(_as_points(x))
    low = np.einsum("...ij,...jk,...kl->...il", g, t, g)
    return np.sqrt(np.abs(np.einsum("...ik,...ik->...", low, t)))


def vector_norm(metric: MetricField, x, u) -> np.ndarray:
    g = metric.g(_as_points(x))
    return np.sqrt(np.einsum("...i,...ij,...j->...", u, g, u))


def gaussian_curvature(metric: MetricField, x) -> np.ndarray:
    """Brioschi formula from g and its first and second partials."""
    x = _as_points(x)
    _, det = metric_inverse(metric, x)
    g = metric.g(x)
    dg = metric.dg(x)
    d2g = metric.second_derivatives(x)
    E, F, G = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
    Eu, Ev = dg[..., 0, 0, 0], dg[..., 1, 0, 0]
    Fu, Fv = dg[..., 0, 0, 1], dg[..., 1, 0, 1]
    Gu, Gv = dg[..., 0, 1, 1], dg[..., 1, 1, 1]
    Evv = d2g[..., 1, 1, 0, 0]
    Fuv = d2g[..., 0, 1, 0, 1]
    Guu = d2g[..., 0, 0, 1, 1]

    def det3(m):
        return np.linalg.det(np.moveaxis(np.array(m), (0, 1), (-2, -1)))

    zero = np.zeros_like(E)
    first = det3([[-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev],
                  [Fv - 0.5 * Gu, E, F],
                  [0.5 * Gv, F, G]])
    second = det3([[zero, 0.5 * Ev, 0.5 * Gu],
                   [0.5 * Ev, E, F],
                   [0.5 * Gu, F, G]])
    return (first - second) / det**2


def rotate_K(metric: MetricField, x, u_value) -> np.ndarray:
    """Quarter turn ``v^k = g^{ki} eps_{ij} u^j`` with eps_12 = sqrt(det g)."""
    _check_dim(metric)
    ginv, det = metric_inverse(metric, x)
    u = np.asarray(u_value, dtype=float)
    root = np.sqrt(det)
    # eps u = sqrt(det) * (u^2, -u^1)
    eu = np.stack([root * u[..., 1], -root * u[..., 0]], axis=-1)
    return np.einsum("...ki,...i->...k", ginv, eu)


# ---------------------------------------------------------------------------
# existence criterion for Killing fields


def _grad4(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central gradient of a scalar function, shape (..., 2)."""
    out = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        out.append((-fn(x + 2 * e) + 8 * fn(x + e) - 8 * fn(x - e) + fn(x - 2 * e)) / (12 * h))
    return np.stack(out, axis=-1)


def _hess4(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    return np.stack([_grad4(lambda y, k=k: _grad4(fn, y, h)[..., k], x, h) for k in range(2)],
                    axis=-2)


def killing_dimension_criterion(metric: MetricField, sample_points, tol: float = 1e-6,
                                domain: ChartDomain | None = None,
                                h_inner: float = 2e-3, h_outer: float = 5e-3) -> KillingDimension:
    """Classify the local dimension of the Killing algebra from curvature alone.

    kappa constant -> 3; else ``dkappa (x) beta`` and ``dkappa (x) alpha`` symmetric -> 1;
    otherwise 0, with ``beta = 1/2 d g(dkappa, dkappa)`` and ``alpha = d Laplace kappa``.
    Symmetry is judged relative to ``max |dkappa| |beta|`` (resp. alpha) over the samples.
    """
    _check_dim(metric)
    x = _as_points(sample_points).reshape(-1, 2)
    if domain is not None and not np.all(domain.contains(x)):
        raise ValueError("sample points outside the chart domain")

    kappa = metric.kappa if metric.kappa is not None else (lambda y: gaussian_curvature(metric, y))

    k0 = kappa(x)
    if np.ptp(k0) <= tol * max(1.0, float(np.max(np.abs(k0)))):
        return KillingDimension.THREE_DIM

    def dkappa(y):
        return _grad4(kappa, y, h_inner)

    def grad_sq(y):
        ginv, _ = metric_inverse(metric, y)
        d = dkappa(y)
        return np.einsum("...i,...ij,...j->...", d, ginv, d)

    def laplace(y):
        ginv, _ = metric_inverse(metric, y)
        gamma = christoffel(metric, y)
        hess = _hess4(kappa, y, h_inner)
        d = dkappa(y)
        cov = hess - np.einsum("...kij,...k->...ij", gamma, d)
        return np.einsum("...ij,...ij->...", ginv, cov)

    dk = dkappa(x)
    beta = 0.5 * _grad4(grad_sq, x, h_outer)
    alpha = _grad4(laplace, x, h_outer)

    def symmetric(w):
        anti = np.abs(dk[:, 0] * w[:, 1] - dk[:, 1] * w[:, 0])
        scale = np.max(np.linalg.norm(dk, axis=1) * np.linalg.norm(w, axis=1))
        return np.max(anti) <= tol * scale if scale > 0 else True

    if symmetric(beta) and symmetric(alpha):
        return KillingDimension.ONE_DIM
    return KillingDimension.ZERO


# ---------------------------------------------------------------------------
# catalog


def _diag_metric(g11, g22, dg11, dg22, d2g11=None, d2g22=None):
    """Metric diag(g11(x1), g22(x1)) depending on x1 only."""

    def g(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = g11(x[..., 0])
        out[..., 1, 1] = g22(x[..., 0])
        return out

    def dg(x):
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, 0, 0] = dg11(x[..., 0])
        out[..., 0, 1, 1] = dg22(x[..., 0])
        return out

    d2g = None
    if d2g11 is not None:
        def d2g(x):
            out = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
            out[..., 0, 0, 0, 0] = d2g11(x[..., 0])
            out[..., 0, 0, 1, 1] = d2g22(x[..., 0])
            return out

    return g, dg, d2g


def _const_field(c1: float, c2: float, name: str) -> AnalyticVectorField:
    return AnalyticVectorField(
        u=lambda x: np.broadcast_to(np.array([c1, c2], dtype=float), x.shape).copy(),
        du=lambda x: np.zeros(x.shape[:-1] + (2, 2)),
        name=name,
    )


def _x1_field(f, df, name: str) -> AnalyticVectorField:
    """Field f(x1) d/dx1."""

    def u(x):
        out = np.zeros(x.shape)
        out[..., 0] = f(x[..., 0])
        return out

    def du(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = df(x[..., 0])
        return out

    return AnalyticVectorField(u=u, du=du, name=name)


def _square(gluing: Gluing) -> ChartDomain:
    return ChartDomain(rectangle=(0.0, TWO_PI, 0.0, TWO_PI), identification=gluing)


def flat_torus() -> Manifold:
    def g(x):
        return np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy()

    metric = MetricField(
        g=g,
        dg=lambda x: np.zeros(x.shape[:-1] + (2, 2, 2)),
        d2g=lambda x: np.zeros(x.shape[:-1] + (2, 2, 2, 2)),
        kappa=lambda x: np.zeros(x.shape[:-1]),
    )
    return Manifold("flat_torus", _square(Gluing.PERIODIC_BOTH), metric,
                    known_killing=[_const_field(1.0, 0.0, "d/dx1"), _const_field(0.0, 1.0, "d/dx2")])


def standard_torus() -> Manifold:
    """Torus of revolution with profile (2 + cos x1, sin x1)."""
    g, dg, d2g = _diag_metric(
        np.ones_like,
        lambda t: (2 + np.cos(t)) ** 2,
        np.zeros_like,
        lambda t: -2 * np.sin(t) * (2 + np.cos(t)),
        np.zeros_like,
        lambda t: 2 * np.sin(t) ** 2 - 2 * np.cos(t) * (2 + np.cos(t)),
    )
    metric = MetricField(g=g, dg=dg, d2g=d2g,
                         kappa=lambda x: np.cos(x[..., 0]) / (2 + np.cos(x[..., 0])))
    return Manifold(
        "standard_torus", _square(Gluing.PERIODIC_BOTH), metric,
        known_killing=[_const_field(0.0, 1.0, "d/dx2")],
        known_conformal_killing=[_x1_field(lambda t: 2 + np.cos(t), lambda t: -np.sin(t),
                                           "(2+cos x1) d/dx1")],
    )


def _klein_a(t):
    c = np.cos(t)
    return 3 * c**2 + 16 * c + 17


def _klein_da(t):
    return -np.sin(t) * (6 * np.cos(t) + 16)


def _klein_d2a(t):
    c, s = np.cos(t), np.sin(t)
    return 6 * s**2 - c * (6 * c + 16)


def klein_bottle() -> Manifold:
    """Klein bottle in R^4; x2-sides glued with the flip x1 -> 2pi - x1."""
    g, dg, d2g = _diag_metric(
        np.ones_like,
        lambda t: _klein_a(t) / 4,
        np.zeros_like,
        lambda t: _klein_da(t) / 4,
        np.zeros_like,
        lambda t: _klein_d2a(t) / 4,
    )

    def kappa(x):
        t = x[..., 0]
        a = _klein_a(t)
        return -_klein_d2a(t) / (2 * a) + _klein_da(t) ** 2 / (4 * a**2)

    metric = MetricField(g=g, dg=dg, d2g=d2g, kappa=kappa)
    # Only locally defined: the flip across x2 = 0 ~ 2pi reverses its sign.
    ck = _x1_field(lambda t: -np.sqrt(_klein_a(t)) / 2,
                   lambda t: -_klein_da(t) / (4 * np.sqrt(_klein_a(t))),
                   "-sqrt(a)/2 d/dx1")
    return Manifold("klein_bottle", _square(Gluing.KLEIN_FLIP), metric,
                    known_killing=[_const_field(0.0, 1.0, "d/dx2")],
                    known_conformal_killing=[ck])


def enneper_domain() -> ChartDomain:
    def curve(fx, fy):
        return lambda t: np.stack([fx(t), fy(t)], axis=-1)

    half_pi = 0.5 * math.pi
    arcs = [
        BoundaryCurve(curve(lambda t: 0.5 * (np.cos(t) + 1), np.sin), 0.0, half_pi, 1),
        BoundaryCurve(curve(lambda t: 0.5 - t, lambda t: np.ones_like(t)), 0.0, 0.5, 2),
        BoundaryCurve(curve(np.cos, np.sin), half_pi, math.pi, 3),
        BoundaryCurve(curve(lambda t: -0.5 * (np.cos(t) + 1), lambda t: -np.sin(t)), 0.0, half_pi, 4),
        BoundaryCurve(curve(lambda t: t, lambda t: -np.ones_like(t)), -0.5, 0.0, 5),
        BoundaryCurve(curve(np.cos, np.sin), 3 * half_pi, TWO_PI, 6),
    ]
    return ChartDomain(boundary=arcs)


def enneper() -> Manifold:
    """Enneper's minimal surface; isothermal with conformal factor (1 + |x|^2)^2."""

    def g(x):
        f = (1 + np.sum(x**2, axis=-1)) ** 2
        return f[..., None, None] * np.eye(2)

    def dg(x):
        f = 4 * (1 + np.sum(x**2, axis=-1))
        return (f[..., None] * x)[..., None, None] * np.eye(2)

    def d2g(x):
        r = 1 + np.sum(x**2, axis=-1)
        h = 4 * r[..., None, None] * np.eye(2) + 8 * x[..., :, None] * x[..., None, :]
        return h[..., None, None] * np.eye(2)

    metric = MetricField(g=g, dg=dg, d2g=d2g,
                         kappa=lambda x: -4 / (1 + np.sum(x**2, axis=-1)) ** 4)

    def rot(x):
        return np.stack([-x[..., 1], x[..., 0]], axis=-1)

    def drot(x):
        return np.broadcast_to(np.array([[0.0, -1.0], [1.0, 0.0]]), x.shape[:-1] + (2, 2)).copy()

    return Manifold("enneper", enneper_domain(), metric,
                    known_killing=[AnalyticVectorField(rot, drot, "-x2 d/dx1 + x1 d/dx2")])


def surface_of_revolution(c1, c2, dc1, dc2, ddc1, ddc2, name: str = "surface_of_revolution",
                          samples: int = 721) -> Manifold:
    """Surface of revolution with a closed, 2pi-periodic profile curve (c1, c2).

    The metric is ``|c'|^2 dx1^2 + c1^2 dx2^2``; third derivatives of the profile
    are not required because second metric derivatives fall back to differences.
    """
    t = np.linspace(0.0, TWO_PI, samples)
    speed = dc1(t) ** 2 + dc2(t) ** 2
    if np.any(speed <= 0) or np.any(c1(t) <= 0):
        raise ValueError("invalid profile curve: need |c'| > 0 and c1 > 0")
    if abs(c1(0.0) - c1(TWO_PI)) > 1e-9 or abs(c2(0.0) - c2(TWO_PI)) > 1e-9:
        raise ValueError("invalid profile curve: must be closed with period 2pi")

    g, dg, _ = _diag_metric(
        lambda s: dc1(s) ** 2 + dc2(s) ** 2,
        lambda s: c1(s) ** 2,
        lambda s: 2 * (dc1(s) * ddc1(s) + dc2(s) * ddc2(s)),
        lambda s: 2 * c1(s) * dc1(s),
    )
    metric = MetricField(g=g, dg=dg)

    def f(s):
        return c1(s) / np.sqrt(dc1(s) ** 2 + dc2(s) ** 2)

    def df(s):
        sp2 = dc1(s) ** 2 + dc2(s) ** 2
        return dc1(s) / np.sqrt(sp2) - c1(s) * (dc1(s) * ddc1(s) + dc2(s) * ddc2(s)) / sp2**1.5

    return Manifold(name, _square(Gluing.PERIODIC_BOTH), metric,
                    known_killing=[_const_field(0.0, 1.0, "d/dx2")],
                    known_conformal_killing=[_x1_field(f, df, "K d/dx2")])


def perturbed_torus(amplitude: float = 0.3) -> Manifold:
    """``diag(1, (2 + cos x1 + a cos x2)^2)``: generically no Killing fields."""

    def w(x):
        return 2 + np.cos(x[..., 0]) + amplitude * np.cos(x[..., 1])

    def g(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = w(x) ** 2
        return out

    def dg(x):
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, 1, 1] = -2 * w(x) * np.sin(x[..., 0])
        out[..., 1, 1, 1] = -2 * w(x) * amplitude * np.sin(x[..., 1])
        return out

    def d2g(x):
        s1, c1 = np.sin(x[..., 0]), np.cos(x[..., 0])
        s2, c2 = amplitude * np.sin(x[..., 1]), amplitude * np.cos(x[..., 1])
        out = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
        out[..., 0, 0, 1, 1] = 2 * s1**2 - 2 * w(x) * c1
        out[..., 1, 1, 1, 1] = 2 * s2**2 - 2 * w(x) * c2
        out[..., 0, 1, 1, 1] = out[..., 1, 0, 1, 1] = 2 * s1 * s2
        return out

    return Manifold(f"perturbed_torus({amplitude})", _square(Gluing.PERIODIC_BOTH),
                    MetricField(g=g, dg=dg, d2g=d2g))


CATALOG: dict[str, Callable[[], Manifold]] = {
    "enneper": enneper,
    "flat_torus": flat_torus,
    "standard_torus": standard_torus,
    "klein_bottle": klein_bottle,
}


def catalog() -> dict[str, Manifold]:
    return {name: build() for name, build in CATALOG.items()}


def get_manifold(name: str) -> Manifold:
    try:
        return CATALOG[name]()
    except KeyError:
        raise KeyError(f"unknown manifold {name!r}; choose from {sorted(CATALOG)}") from None


def sample_points(manifold: Manifold, n: int, seed: int = 0, margin: float = 1e-3) -> np.ndarray:
    """Random interior points of the manifold's chart."""
    return manifold.chart.sample_interior(n, np.random.default_rng(seed), margin=margin)


__all__: Sequence[str] = [
    "AnalyticVectorField", "BoundaryCurve", "CATALOG", "ChartDomain", "DegenerateMetricError",
    "Gluing", "KillingDimension", "Manifold", "MetricField", "UnsupportedDimensionError",
    "c_operator", "catalog", "christoffel", "contravariant_norm", "covariant_derivative",
    "divergence", "enneper", "enneper_domain", "flat_torus", "gaussian_curvature",
    "get_manifold", "killing_dimension_criterion", "klein_bottle", "metric_inverse",
    "perturbed_torus", "rotate_K", "s_operator", "sample_points", "standard_torus",
    "surface_of_revolution", "vector_norm",
]
