"""Parameter-domain triangulations, metric adaptation and side gluing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .geometry import TWO_PI, ChartDomain, Gluing, MetricField, metric_inverse

GluingSpec = Gluing

MESH_HEADER = "ntri-mesh 1"
QUALITY_FLOOR = 0.1

# side tags of structured rectangle meshes
BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4


class GluingMismatchError(ValueError):
    def __init__(self, vertex: int, point):
        self.vertex = vertex
        super().__init__(f"vertex {vertex} at {np.asarray(point).tolist()} has no partner "
                         f"on the glued side")


class InvalidMeshError(ValueError):
    pass


@dataclass
class Triangulation:
    vertices: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (T, 3), counterclockwise
    boundary_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    boundary_tags: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_tags = np.asarray(self.boundary_tags, dtype=np.int64).reshape(-1)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges (sorted vertex pairs) and the (T, 3) triangle-to-edge map.

        Local edge e of a triangle joins local vertices (e, e+1 mod 3).
        """
        t = self.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        local.sort(axis=1)
        uniq, inverse = np.unique(local, axis=0, return_inverse=True)
        return uniq, inverse.reshape(-1, 3)

    def check(self, domain_area: float | None = None, rtol: float = 1e-10):
        """Raise :class:`InvalidMeshError` unless every Triangulation invariant holds."""
        areas = self.signed_areas()
        if np.any(areas <= 0):
            raise InvalidMeshError(f"triangle {int(np.argmin(areas))} has nonpositive area")
        _, tri_edges = self.edges()
        counts = np.bincount(tri_edges.ravel())
        if np.any(counts > 2):
            raise InvalidMeshError("an edge is shared by more than two triangles")
        uniq, _ = self.edges()
        single = {tuple(e) for e in uniq[counts == 1]}
        declared = {tuple(sorted(e)) for e in self.boundary_edges}
        if single != declared:
            raise InvalidMeshError("boundary edges do not match edges with one triangle")
        if domain_area is not None and abs(areas.sum() - domain_area) > rtol * abs(domain_area):
            raise InvalidMeshError(f"mesh area {areas.sum()} differs from domain area {domain_area}")


# ---------------------------------------------------------------------------
# generation


def _structured_rectangle(rect, n: int) -> Triangulation:
    a, b, c, d = rect
    xs = np.linspace(a, b, n + 1)
    ys = np.linspace(c, d, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):  # i along x1, j along x2
        return j * (n + 1) + i

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    triangles = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])
    k = np.arange(n)
    edges = [np.stack([vid(k, 0), vid(k + 1, 0)], 1),
             np.stack([vid(n, k), vid(n, k + 1)], 1),
             np.stack([vid(k + 1, n), vid(k, n)], 1),
             np.stack([vid(0, k + 1), vid(0, k)], 1)]
    tags = np.concatenate([np.full(n, t) for t in (BOTTOM, RIGHT, TOP, LEFT)])
    return Triangulation(vertices, triangles, np.concatenate(edges), tags)


def _resample_curve(curve, segments: int) -> np.ndarray:
    """``segments + 1`` points at equal arclength along a boundary curve."""
    t = np.linspace(curve.t0, curve.t1, 4097)
    p = curve.fn(t)
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(p, axis=0).T))])
    targets = np.linspace(0.0, s[-1], segments + 1)
    return curve.fn(np.interp(targets, s, t))


def _fill_curved(domain: ChartDomain, h: float, smoothing: int = 6) -> Triangulation:
    pts, tags = [], []
    for crv in domain.boundary:
        m = max(1, int(round(crv.length() / h)))
        p = _resample_curve(crv, m)[:-1]
        pts.append(p)
        tags.append(np.full(len(p), crv.tag))
    boundary = np.concatenate(pts)
    btag = np.concatenate(tags)

    # conforming refinement: split boundary segments until all appear as Delaunay edges
    poly = domain.polygon(256)
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    dy = h * math.sqrt(3) / 2
    rows = np.arange(lo[1], hi[1] + dy, dy)
    lattice = [np.stack([np.arange(lo[0] + (r % 2) * h / 2, hi[0] + h, h),
                         np.full_like(np.arange(lo[0] + (r % 2) * h / 2, hi[0] + h, h), y)], 1)
               for r, y in enumerate(rows)]
    interior = np.concatenate(lattice)
    interior = interior[domain.contains(interior, margin=0.45 * h)]

    nb = len(boundary)
    for _ in range(smoothing + 1):
        allp = np.vstack([boundary, interior])
        tri = Delaunay(allp).simplices
        cent = allp[tri].mean(axis=1)
        tri = tri[domain.contains(cent)]
        mesh = Triangulation(allp, tri)
        # Laplacian smoothing of interior points only
        e, _ = mesh.edges()
        nsum = np.zeros_like(allp)
        cnt = np.zeros(len(allp))
        np.add.at(nsum, e[:, 0], allp[e[:, 1]])
        np.add.at(nsum, e[:, 1], allp[e[:, 0]])
        np.add.at(cnt, e[:, 0], 1)
        np.add.at(cnt, e[:, 1], 1)
        new_interior = nsum[nb:] / np.maximum(cnt[nb:, None], 1)
        interior = new_interior[domain.contains(new_interior)]

    areas = mesh.signed_areas()
    tri = mesh.triangles.copy()
    flip = areas < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    tri = tri[np.abs(areas) > 1e-14 * h * h]
    bedges = np.stack([np.arange(nb), (np.arange(nb) + 1) % nb], axis=1)
    mesh = Triangulation(mesh.vertices, tri, bedges, btag)
    present = {tuple(sorted(x)) for x in mesh.edges()[0]}
    missing = [k for k, ed in enumerate(bedges) if tuple(sorted(ed)) not in present]
    if missing:
        raise InvalidMeshError(f"{len(missing)} boundary segments missing from the Delaunay mesh")
    return mesh


def generate_structured(domain: ChartDomain, n: int) -> Triangulation:
    """Initial triangulation of a chart domain.

    Rectangles: an n x n grid of squares, each cut along its rising diagonal,
    giving (n+1)^2 vertices and 2 n^2 triangles.  Curved domains: ``n`` is the
    target triangle count; the boundary is resampled at equal arclength and the
    interior filled with a smoothed lattice and Delaunay-triangulated.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if domain.is_rectangle:
        return _structured_rectangle(domain.rectangle, n)
    area = domain.area()
    h = math.sqrt(4 * area / (math.sqrt(3) * n))
    best = None
    for _ in range(10):
        mesh = _fill_curved(domain, h)
        ratio = mesh.n_triangles / n
        if best is None or abs(mesh.n_triangles - n) < abs(best.n_triangles - n):
            best = mesh
        if abs(ratio - 1) < 0.04:
            break
        h *= math.sqrt(ratio)
    return best


# ---------------------------------------------------------------------------
# metric measurements


def riemannian_edge_length(metric: MetricField, p, q, points: int = 4) -> np.ndarray:
    """Length of the parameter segment p -> q, by Gauss-Legendre along the segment."""
    from .fem.quadrature import gauss_legendre_segment  # fem depends on this module

    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    t, w = gauss_legendre_segment(points)
    d = q - p
    x = p[..., None, :] + t[:, None] * d[..., None, :]
    metric_inverse(metric, x)
    g = metric.g(x)
    speed = np.sqrt(np.einsum("...i,...qij,...j->...q", d, g, d))
    return speed @ w


def edge_lengths(mesh: Triangulation, metric: MetricField) -> np.ndarray:
    e, _ = mesh.edges()
    return riemannian_edge_length(metric, mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]])


def _quality(p0, p1, p2, metric: MetricField) -> np.ndarray:
    """2 * inradius / circumradius measured in the metric frozen at the barycenter."""
    g = metric.g((p0 + p1 + p2) / 3.0)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    sides = [p1 - p0, p2 - p1, p0 - p2]
    a, b, c = (np.sqrt(np.einsum("...i,...ij,...j->...", s, g, s)) for s in sides)
    cross = sides[0][..., 0] * (p2 - p0)[..., 1] - sides[0][..., 1] * (p2 - p0)[..., 0]
    area = 0.5 * cross * np.sqrt(det)
    s = 0.5 * (a + b + c)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = 8.0 * area * np.abs(area) / (s * a * b * c)
    return np.where(np.isfinite(q), q, -1.0)


def triangle_quality(mesh: Triangulation, metric: MetricField) -> np.ndarray:
    p = mesh.vertices[mesh.triangles]
    return _quality(p[:, 0], p[:, 1], p[:, 2], metric)


def riemannian_area(mesh: Triangulation, metric: MetricField) -> float:
    from .fem.quadrature import quadrature_degree5

    rule = quadrature_degree5()
    p = mesh.vertices[mesh.triangles]
    x = np.einsum("qa,tad->tqd", rule.points, p)
    _, det = metric_inverse(metric, x)
    return float(np.sum(mesh.signed_areas()[:, None] * rule.weights * np.sqrt(det)))


def target_edge_length(mesh: Triangulation, metric: MetricField, n_triangles: int) -> float:
    """Edge length whose equilateral triangles tile the Riemannian area ``n_triangles`` times."""
    return math.sqrt(4 * riemannian_area(mesh, metric) / (math.sqrt(3) * n_triangles))


# ---------------------------------------------------------------------------
# gluing


@dataclass
class VertexIdentification:
    """Equivalence classes of points under a gluing, with vector-component signs.

    ``representative[i]`` is the smallest index in the class of point i and
    ``signs[i, c]`` converts component c from the representative's frame to
    point i's frame.  ``dropped[i, c]`` marks components forced to zero because
    the signs around an identification cycle compose to -1.
    """

    representative: np.ndarray
    signs: np.ndarray
    dropped: np.ndarray

    @property
    def n_classes(self) -> int:
        return len(np.unique(self.representative))

    def class_index(self) -> np.ndarray:
        """Class ids 0..C-1 ordered by representative."""
        _, idx = np.unique(self.representative, return_inverse=True)
        return idx


def _side_masks(points: np.ndarray, tol: float):
    x, y = points[:, 0], points[:, 1]
    return (np.abs(x) <= tol, np.abs(x - TWO_PI) <= tol, np.abs(y) <= tol, np.abs(y - TWO_PI) <= tol)


def gluing_partner(points: np.ndarray, gluing: Gluing, side: str) -> tuple[np.ndarray, float]:
    """Image of points on the left (``'x1'``) or bottom (``'x2'``) side, and the u^1 sign."""
    pts = np.asarray(points, dtype=float)
    if side == "x1":
        return np.stack([np.full(len(pts), TWO_PI), pts[:, 1]], axis=1), 1.0
    if gluing is Gluing.KLEIN_FLIP:
        return np.stack([TWO_PI - pts[:, 0], np.full(len(pts), TWO_PI)], axis=1), -1.0
    return np.stack([pts[:, 0], np.full(len(pts), TWO_PI)], axis=1), 1.0


def identify_points(points, gluing: Gluing, tol: float = 1e-9) -> VertexIdentification:
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    parent = np.arange(n)
    parity = np.zeros(n, dtype=np.int64)
    conflict = np.zeros(n, dtype=bool)
    if gluing is Gluing.NONE:
        return VertexIdentification(parent, np.ones((n, 2)), np.zeros((n, 2), dtype=bool))

    def find(i):
        p = 0
        path = []
        while parent[i] != i:
            path.append(i)
            p ^= parity[i]
            i = parent[i]
        # path compression keeping parities relative to the root
        acc = p
        for j in path:
            nxt = acc ^ parity[j]
            parity[j] = acc
            parent[j] = i
            acc = nxt
        return i, p

    tree = cKDTree(pts)
    left, right, bottom, top = _side_masks(pts, tol)
    matched = np.zeros(n, dtype=bool)
    for side, src in (("x1", left), ("x2", bottom)):
        idx = np.flatnonzero(src)
        if len(idx) == 0:
            continue
        image, sign = gluing_partner(pts[idx], gluing, side)
        dist, j = tree.query(image)
        bad = dist > tol
        if np.any(bad):
            k = idx[np.argmax(bad)]
            raise GluingMismatchError(int(k), pts[k])
        matched[j] = True
        flip = 1 if sign < 0 else 0
        for a, b in zip(idx, j):
            ra, pa = find(a)
            rb, pb = find(b)
            if ra == rb:
                if pa ^ pb != flip:
                    conflict[ra] = True
                continue
            lo, hi = (ra, rb) if ra < rb else (rb, ra)
            parent[hi] = lo
            parity[hi] = pa ^ pb ^ flip
            conflict[lo] |= conflict[hi]
    unmatched = np.flatnonzero((right | top) & ~matched)
    if len(unmatched):
        k = int(unmatched[0])
        raise GluingMismatchError(k, pts[k])

    reps = np.empty(n, dtype=np.int64)
    signs = np.ones((n, 2))
    for i in range(n):
        r, p = find(i)
        reps[i] = r
        signs[i, 0] = -1.0 if p else 1.0
    dropped = np.zeros((n, 2), dtype=bool)
    dropped[:, 0] = conflict[reps]
    return VertexIdentification(reps, signs, dropped)


def identify(mesh: Triangulation, gluing: Gluing, tol: float = 1e-9) -> VertexIdentification:
    """Identify mesh vertices across glued sides of [0, 2pi]^2."""
    return identify_points(mesh.vertices, gluing, tol)


# ---------------------------------------------------------------------------
# adaptation


class _Sides:
    """Glued-side bookkeeping: which side a vertex lies on and its partner frame map."""

    def __init__(self, gluing: Gluing, tol: float = 1e-9):
        self.gluing = gluing
        self.tol = tol

    def side(self, p) -> str | None:
        if self.gluing is Gluing.NONE:
            return None
        x, y = p
        t = self.tol
        on_x = abs(x) <= t or abs(x - TWO_PI) <= t
        on_y = abs(y) <= t or abs(y - TWO_PI) <= t
        if on_x and on_y:
            return "corner"
        if abs(x) <= t:
            return "left"
        if abs(x - TWO_PI) <= t:
            return "right"
        if abs(y) <= t:
            return "bottom"
        if abs(y - TWO_PI) <= t:
            return "top"
        return None

    def to_partner(self, p, side: str) -> np.ndarray:
        """Image of a point of ``side`` on the opposite side."""
        x, y = p
        if side == "left":
            return np.array([TWO_PI, y])
        if side == "right":
            return np.array([0.0, y])
        klein = self.gluing is Gluing.KLEIN_FLIP
        if side == "bottom":
            return np.array([TWO_PI - x if klein else x, TWO_PI])
        if side == "top":
            return np.array([TWO_PI - x if klein else x, 0.0])
        raise ValueError(side)

    def frame_map(self, side: str):
        """(A, b) with y -> A y + b taking the partner's frame into this side's frame."""
        eye = np.eye(2)
        if side == "left":
            return eye, np.array([-TWO_PI, 0.0])
        if side == "right":
            return eye, np.array([TWO_PI, 0.0])
        if self.gluing is Gluing.KLEIN_FLIP:
            flip = np.diag([-1.0, 1.0])
            shift = -TWO_PI if side == "bottom" else TWO_PI
            return flip, np.array([TWO_PI, shift])
        return eye, np.array([0.0, -TWO_PI if side == "bottom" else TWO_PI])

    @staticmethod
    def tangent(side: str) -> np.ndarray:
        return np.array([0.0, 1.0]) if side in ("left", "right") else np.array([1.0, 0.0])


class _Remesher:
    def __init__(self, mesh: Triangulation, metric: MetricField, h: float, gluing: Gluing):
        self.metric = metric
        self.h = h
        self.sides = _Sides(gluing)
        self.pts = [np.array(p) for p in mesh.vertices]
        self.tris = [tuple(int(v) for v in t) for t in mesh.triangles]
        self.bnd = {(int(a), int(b)): int(t) for (a, b), t in zip(mesh.boundary_edges, mesh.boundary_tags)}
        self.side_of = [self.sides.side(p) for p in self.pts]
        self.partner: dict[int, int] = {}
        if gluing is not Gluing.NONE:
            vid = identify(mesh, gluing)
            for side in ("left", "right", "bottom", "top"):
                for i, s in enumerate(self.side_of):
                    if s != side:
                        continue
                    target = self.sides.to_partner(self.pts[i], s)
                    mates = [j for j in range(len(self.pts))
                             if vid.representative[j] == vid.representative[i] and j != i
                             and np.linalg.norm(self.pts[j] - target) <= 1e-9]
                    self.partner[i] = mates[0]
        self.boundary_vertices = {v for e in self.bnd for v in e}

    # -- helpers ----------------------------------------------------------
    def length(self, a: int, b: int) -> float:
        return float(riemannian_edge_length(self.metric, self.pts[a], self.pts[b]))

    def quality(self, tri) -> float:
        p = [self.pts[v][None] for v in tri]
        return float(_quality(p[0], p[1], p[2], self.metric)[0])

    def area(self, tri) -> float:
        p0, p1, p2 = (self.pts[v] for v in tri)
        d1, d2 = p1 - p0, p2 - p0
        return 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])

    def edge_map(self):
        em: dict[tuple[int, int], list[int]] = {}
        for k, t in enumerate(self.tris):
            for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                em.setdefault((min(a, b), max(a, b)), []).append(k)
        return em

    def vertex_stars(self):
        star: dict[int, list[int]] = {}
        for k, t in enumerate(self.tris):
            for v in t:
                star.setdefault(v, []).append(k)
        return star

    def lengths_all(self, edges):
        e = np.array(edges)
        P = np.array(self.pts)
        return riemannian_edge_length(self.metric, P[e[:, 0]], P[e[:, 1]])

    def midpoint(self, a: int, b: int) -> np.ndarray:
        """Point halving the Riemannian length of the segment a -> b (Newton on t)."""
        p, q = self.pts[a], self.pts[b]
        d = q - p
        half = 0.5 * self.length(a, b)
        t = 0.5
        for _ in range(10):
            x = p + t * d
            gap = float(riemannian_edge_length(self.metric, p, x)) - half
            speed = math.sqrt(float(d @ self.metric.g(x[None])[0] @ d))
            dt = gap / speed
            t = min(max(t - dt, 0.05), 0.95)
            if abs(dt) < 1e-13:
                break
        return p + t * d

    def add_vertex(self, p) -> int:
        self.pts.append(np.asarray(p, dtype=float))
        self.side_of.append(self.sides.side(p))
        return len(self.pts) - 1

    def _oriented_boundary(self, a: int, b: int):
        if (a, b) in self.bnd:
            return (a, b)
        if (b, a) in self.bnd:
            return (b, a)
        return None

    # -- operators ----------------------------------------------------------
    def split_pass(self) -> int:
        em = self.edge_map()
        keys = list(em)
        lengths = self.lengths_all(keys)
        order = np.argsort(-lengths)
        touched: set[int] = set()
        new_tris = list(self.tris)
        removed: set[int] = set()
        count = 0
        for idx in order:
            if lengths[idx] <= 1.4 * self.h:
                break
            a, b = keys[idx]
            tris = em[(a, b)]
            if any(t in touched for t in tris):
                continue
            bedge = self._oriented_boundary(a, b)
            partner_edge = None
            if bedge is not None and self.sides.gluing is not Gluing.NONE:
                sa, sb = self.side_of[bedge[0]], self.side_of[bedge[1]]
                side = sa if sa not in (None, "corner") else sb
                if side in (None, "corner"):
                    continue
                if side in ("right", "top"):
                    continue  # handled from the primary side
                pa, pb = self.partner.get(bedge[0]), self.partner.get(bedge[1])
                if pa is None:
                    pa = self._corner_partner(bedge[0], side)
                if pb is None:
                    pb = self._corner_partner(bedge[1], side)
                partner_edge = self._oriented_boundary(pa, pb)
                if partner_edge is None:
                    continue
                ptris = em[(min(pa, pb), max(pa, pb))]
                if any(t in touched for t in ptris):
                    continue
            elif bedge is not None:
                continue  # free boundaries keep their discretization

            m_pt = self.midpoint(a, b)
            if bedge is not None:
                side = self.side_of[bedge[0]] if self.side_of[bedge[0]] not in (None, "corner") \
                    else self.side_of[bedge[1]]
                # snap to the side exactly
                if side == "left":
                    m_pt[0] = 0.0
                elif side == "bottom":
                    m_pt[1] = 0.0
            m = self.add_vertex(m_pt)
            self._split_edge(a, b, m, tris, new_tris, removed, touched)
            if partner_edge is not None:
                mp = self.add_vertex(self.sides.to_partner(m_pt, self.side_of[m]))
                self.partner[m] = mp
                self.partner[mp] = m
                pa, pb = partner_edge
                self._split_edge(min(pa, pb), max(pa, pb), mp,
                                 em[(min(pa, pb), max(pa, pb))], new_tris, removed, touched)
            count += 1
        self.tris = [t for k, t in enumerate(new_tris) if k not in removed]
        return count

    def _corner_partner(self, v: int, side: str) -> int:
        target = self.sides.to_partner(self.pts[v], side)
        for j, p in enumerate(self.pts):
            if np.linalg.norm(p - target) <= 1e-9:
                return j
        raise InvalidMeshError(f"corner {v} has no partner")

    def _split_edge(self, a, b, m, tris, new_tris, removed, touched):
        for k in tris:
            t = self.tris[k]
            # rotate so that the split edge is (t0, t1)
            for r in range(3):
                rt = t[r:] + t[:r]
                if {rt[0], rt[1]} == {a, b}:
                    break
            u, v, w = rt
            removed.add(k)
            touched.add(k)
            new_tris.append((u, m, w))
            new_tris.append((m, v, w))
        bedge = self._oriented_boundary(a, b)
        if bedge is not None:
            tag = self.bnd.pop(bedge)
            self.bnd[(bedge[0], m)] = tag
            self.bnd[(m, bedge[1])] = tag
            self.boundary_vertices.add(m)

    def flip_pass(self) -> int:
        """Flip interior edges where the worse of the two triangles improves."""
        em = self.edge_map()
        cand = [(a, b, ts[0], ts[1]) for (a, b), ts in em.items() if len(ts) == 2]
        if not cand:
            return 0
        C = np.array(cand)
        T = np.array(self.tris)
        P = np.array(self.pts)
        t1, t2 = T[C[:, 2]], T[C[:, 3]]
        rows = np.arange(len(C))
        off1 = (t1 != C[:, :1]) & (t1 != C[:, 1:2])
        off2 = (t2 != C[:, :1]) & (t2 != C[:, 1:2])
        r = np.argmax(off1, axis=1)
        c = t1[rows, r]
        a1 = t1[rows, (r + 1) % 3]
        b1 = t1[rows, (r + 2) % 3]
        d = t2[rows, np.argmax(off2, axis=1)]
        n1 = np.stack([a1, d, c], 1)
        n2 = np.stack([d, b1, c], 1)

        def q(tri):
            return _quality(P[tri[:, 0]], P[tri[:, 1]], P[tri[:, 2]], self.metric)

        q_tri = q(T)
        old = np.minimum(q_tri[C[:, 2]], q_tri[C[:, 3]])
        new = np.minimum(q(n1), q(n2))
        ok = (new > 1.02 * old) & (c != d)
        existing = set(em)
        done: set[int] = set()
        count = 0
        for k in np.flatnonzero(ok)[np.argsort(-(new - old)[ok])]:
            k1, k2 = int(C[k, 2]), int(C[k, 3])
            key = (min(c[k], d[k]), max(c[k], d[k]))
            if k1 in done or k2 in done or key in existing:
                continue
            self.tris[k1] = tuple(int(v) for v in n1[k])
            self.tris[k2] = tuple(int(v) for v in n2[k])
            done.update((k1, k2))
            existing.discard((int(C[k, 0]), int(C[k, 1])))
            existing.add(key)
            count += 1
        return count

    def collapse_pass(self) -> int:
        em = self.edge_map()
        star = self.vertex_stars()
        keys = list(em)
        lengths = self.lengths_all(keys)
        order = np.argsort(lengths)
        touched: set[int] = set()
        dead: set[int] = set()
        count = 0
        for idx in order:
            if lengths[idx] >= 0.6 * self.h:
                break
            a, b = keys[idx]
            for rm, keep in ((a, b), (b, a)):
                if rm in self.boundary_vertices:
                    continue
                if rm in dead or keep in dead:
                    continue
                ring = star[rm]
                if any(t in touched for t in ring) or any(t in touched for t in star[keep]):
                    continue
                shared = set(em[(a, b)])
                nb_rm = {v for t in ring for v in self.tris[t]} - {rm}
                nb_keep = {v for t in star[keep] for v in self.tris[t]} - {keep}
                opposite = {v for t in shared for v in self.tris[t]} - {a, b}
                if (nb_rm & nb_keep) != opposite:
                    continue
                old_q = min(self.quality(self.tris[t]) for t in ring)
                floor = min(QUALITY_FLOOR, old_q)
                ok = True
                new = {}
                for t in ring:
                    if t in shared:
                        continue
                    nt = tuple(keep if v == rm else v for v in self.tris[t])
                    if self.area(nt) <= 0 or self.quality(nt) < floor:
                        ok = False
                        break
                    new[t] = nt
                if not ok:
                    continue
                if any(self.length(keep, v) > 1.4 * self.h for v in nb_rm - {keep}):
                    continue
                for t, nt in new.items():
                    self.tris[t] = nt
                for t in shared:
                    self.tris[t] = None
                touched.update(ring)
                touched.update(star[keep])
                dead.add(rm)
                count += 1
                break
        self.tris = [t for t in self.tris if t is not None]
        return count

    def _glued_groups(self):
        """(primary, partner, A, b) index arrays for glued non-corner vertex pairs."""
        groups = []
        for side in ("left", "bottom"):
            prim = [v for v, p in self.partner.items()
                    if self.side_of[v] == side and v in self.boundary_vertices]
            if prim:
                A, b = self.sides.frame_map(side)
                groups.append((np.array(prim), np.array([self.partner[v] for v in prim]), A, b, side))
        return groups

    def smooth(self, sweeps: int = 3, relax: float = 0.5):
        """Metric-weighted Laplacian smoothing (Jacobi sweeps).

        Each free vertex moves toward the metric-weighted average of its
        neighbours.  A glued vertex pair moves as one point of the quotient:
        the partner's neighbours are mapped into the primary's frame and the
        step is restricted to the side's tangent direction.
        """
        groups = self._glued_groups()
        for _ in range(sweeps):
            P = np.array(self.pts)
            T = np.array(self.tris)
            n = len(P)
            mesh = Triangulation(P, T)
            E, _ = mesh.edges()
            Ge = self.metric.g(0.5 * (P[E[:, 0]] + P[E[:, 1]]))
            src = np.concatenate([E[:, 0], E[:, 1]])
            dst = np.concatenate([E[:, 1], E[:, 0]])
            G2 = np.concatenate([Ge, Ge])
            Gs = np.zeros((n, 2, 2))
            Gy = np.zeros((n, 2))
            np.add.at(Gs, src, G2)
            np.add.at(Gy, src, np.einsum("kij,kj->ki", G2, P[dst]))
            movable = np.ones(n, dtype=bool)
            movable[list(self.boundary_vertices)] = False
            movable[np.setdiff1d(np.arange(n), T.ravel())] = False
            for prim, part, A, b, _side in groups:
                # A is an involution, so A G A maps the partner's metric into this frame
                GsP = A @ Gs[part] @ A
                Gy[prim] = Gy[prim] + np.einsum("ij,kj->ki", A, Gy[part]) + GsP @ b
                Gs[prim] = Gs[prim] + GsP
                movable[prim] = True
            idx = np.flatnonzero(movable)
            step = np.zeros_like(P)
            step[idx] = relax * (np.linalg.solve(Gs[idx], Gy[idx][..., None])[..., 0] - P[idx])
            partner_of = {}
            for prim, part, _A, _b, side in groups:
                t = self.sides.tangent(side)
                step[prim] = np.outer(step[prim] @ t, t)
                for v, w in zip(prim, part):
                    partner_of[int(v)] = int(w)
                    partner_of[int(w)] = int(v)

            old_q = _quality(P[T[:, 0]], P[T[:, 1]], P[T[:, 2]], self.metric)
            frozen = ~movable
            for _ in range(20):
                newP = P + np.where(frozen[:, None], 0.0, step)
                for prim, part, _A, _b, side in groups:
                    newP[part] = np.array([self.sides.to_partner(x, side) for x in newP[prim]]) \
                        if len(prim) else newP[part]
                q = _quality(newP[T[:, 0]], newP[T[:, 1]], newP[T[:, 2]], self.metric)
                bad = (q <= 0) | (q < np.minimum(QUALITY_FLOOR, old_q))
                if not bad.any():
                    break
                verts = np.unique(T[bad])
                extra = [partner_of[v] for v in verts.tolist() if v in partner_of]
                frozen[verts] = True
                frozen[extra] = True
            else:
                newP = P
            if np.all(frozen):
                break
            self.pts = [p for p in newP]

    def result(self) -> Triangulation:
        used = sorted({v for t in self.tris for v in t})
        remap = -np.ones(len(self.pts), dtype=np.int64)
        remap[used] = np.arange(len(used))
        verts = np.array([self.pts[v] for v in used])
        tris = remap[np.array(self.tris)]
        bedges = np.array([[remap[a], remap[b]] for (a, b) in self.bnd], dtype=np.int64).reshape(-1, 2)
        tags = np.array(list(self.bnd.values()), dtype=np.int64)
        order = np.lexsort((bedges[:, 1], bedges[:, 0])) if len(bedges) else np.zeros(0, dtype=np.int64)
        return Triangulation(verts, tris, bedges[order], tags[order])


def length_ratio(mesh: Triangulation, metric: MetricField) -> float:
    lengths = edge_lengths(mesh, metric)
    return float(lengths.max() / lengths.min())


def adapt(mesh: Triangulation, metric: MetricField, target_h: float,
          gluing: Gluing = Gluing.NONE, iterations: int = 6) -> Triangulation:
    """Make the triangulation quasiuniform in the metric.

    Each iteration splits edges longer than 1.4 target_h at their Riemannian
    midpoint, flips edges where that improves metric quality, collapses
    interior vertices on edges shorter than 0.6 target_h, and relaxes vertices
    with a metric-weighted Laplacian.  Boundary vertices on free (unglued)
    sides never move.  Among the iterates, the one with the smallest max/min
    Riemannian edge-length ratio that does not exceed the input's is returned.
    """
    start_ratio = length_ratio(mesh, metric)
    rm = _Remesher(mesh, metric, target_h, gluing)
    best, best_ratio = mesh, start_ratio
    for _ in range(iterations):
        for _ in range(4):
            if rm.split_pass() == 0:
                break
            rm.flip_pass()
        rm.flip_pass()
        rm.collapse_pass()
        rm.flip_pass()
        rm.smooth(sweeps=3)
        rm.flip_pass()
        out = rm.result()
        ratio = length_ratio(out, metric)
        if ratio <= best_ratio or best is mesh:
            if ratio <= start_ratio:
                best, best_ratio = out, ratio
    return best


# ---------------------------------------------------------------------------
# file format


def write_mesh(mesh: Triangulation, path) -> None:
    lines = [MESH_HEADER, str(mesh.n_vertices)]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(str(mesh.n_triangles))
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    lines.append(str(len(mesh.boundary_edges)))
    lines += [f"{i} {j} {t}" for (i, j), t in zip(mesh.boundary_edges, mesh.boundary_tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Triangulation:
    lines = Path(path).read_text().split("\n")
    if lines[0].strip() != MESH_HEADER:
        raise ValueError(f"not a mesh file (expected header {MESH_HEADER!r})")
    pos = 1
    nv = int(lines[pos]); pos += 1
    verts = np.array([[float(v) for v in lines[pos + k].split()] for k in range(nv)]).reshape(-1, 2)
    pos += nv
    nt = int(lines[pos]); pos += 1
    tris = np.array([[int(v) for v in lines[pos + k].split()] for k in range(nt)]).reshape(-1, 3)
    pos += nt
    nb = int(lines[pos]) if pos < len(lines) and lines[pos].strip() else 0
    pos += 1
    rows = np.array([[int(v) for v in lines[pos + k].split()] for k in range(nb)]).reshape(-1, 3)
    return Triangulation(verts, tris, rows[:, :2], rows[:, 2])


__all__ = [
    "GluingMismatchError", "GluingSpec", "InvalidMeshError", "Triangulation", "VertexIdentification",
    "adapt", "edge_lengths", "generate_structured", "gluing_partner", "identify", "identify_points",
    "length_ratio", "read_mesh", "riemannian_area", "riemannian_edge_length", "target_edge_length",
    "triangle_quality", "write_mesh",
]
