from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from killingfem import geometry as G
from killingfem import mesh as M

TWO_PI = 2 * math.pi


def unit_square():
    return G.ChartDomain(rectangle=(0.0, 1.0, 0.0, 1.0))


def square(gluing=G.Gluing.NONE):
    return G.ChartDomain(rectangle=(0.0, TWO_PI, 0.0, TWO_PI), identification=gluing)


# ---------------------------------------------------------------------------
# generation


def test_structured_counts():
    m = M.generate_structured(unit_square(), 1)
    assert (m.n_vertices, m.n_triangles) == (4, 2)
    m = M.generate_structured(square(), 10)
    assert (m.n_vertices, m.n_triangles) == (121, 200)
    m.check(domain_area=TWO_PI**2)
    assert len(m.boundary_edges) == 40
    assert set(m.boundary_tags) == {M.BOTTOM, M.RIGHT, M.TOP, M.LEFT}


def test_enneper_mesh_size_and_validity():
    dom = G.enneper_domain()
    m = M.generate_structured(dom, 2000)
    assert 1800 <= m.n_triangles <= 2200
    m.check()
    bverts = np.unique(m.boundary_edges)
    interior = np.setdiff1d(np.arange(m.n_vertices), bverts)
    assert np.all(dom.contains(m.vertices[interior]))
    # the polygonal mesh covers the curved domain up to the chord error
    assert m.signed_areas().sum() == pytest.approx(dom.area(), rel=5e-3)
    assert set(m.boundary_tags) == {1, 2, 3, 4, 5, 6}


def test_check_rejects_inverted_triangle():
    m = M.generate_structured(unit_square(), 2)
    bad = M.Triangulation(m.vertices, m.triangles[:, ::-1], m.boundary_edges, m.boundary_tags)
    with pytest.raises(M.InvalidMeshError):
        bad.check()
    with pytest.raises(M.InvalidMeshError):
        M.Triangulation(m.vertices, m.triangles, m.boundary_edges[:-1], m.boundary_tags[:-1]).check()
    with pytest.raises(M.InvalidMeshError):
        m.check(domain_area=2.0)


# ---------------------------------------------------------------------------
# lengths


def test_edge_length_examples():
    flat = G.flat_torus().metric
    torus = G.standard_torus().metric
    assert M.riemannian_edge_length(flat, [0, 0], [3, 4]) == pytest.approx(5.0, rel=1e-15)
    assert M.riemannian_edge_length(torus, [0, 0], [0, 1]) == pytest.approx(3.0, rel=1e-15)
    assert M.riemannian_edge_length(torus, [0, 0], [1, 0]) == pytest.approx(1.0, rel=1e-15)


def test_edge_length_along_meridian_oracle():
    # x2 = const segment from x1 = a to b has length b - a; x1 = t segment has length (2 + cos t) * dx2
    torus = G.standard_torus().metric
    assert M.riemannian_edge_length(torus, [0.3, 1.0], [2.1, 1.0]) == pytest.approx(1.8, rel=1e-14)
    assert M.riemannian_edge_length(torus, [2.0, 0.0], [2.0, 0.5]) == pytest.approx(0.5 * (2 + math.cos(2.0)))


@given(st.floats(0, TWO_PI), st.floats(0, TWO_PI), st.floats(0, TWO_PI), st.floats(0, TWO_PI))
def test_edge_length_symmetric_and_bounded(a, b, c, d):
    torus = G.standard_torus().metric
    p, q = np.array([a, b]), np.array([c, d])
    lpq = M.riemannian_edge_length(torus, p, q)
    assert lpq == pytest.approx(M.riemannian_edge_length(torus, q, p), rel=1e-13, abs=1e-15)
    e = np.linalg.norm(q - p)
    # 1 <= g22 <= 9 bounds the length between the Euclidean length and three times it
    assert e * (1 - 1e-12) <= lpq <= 3 * e * (1 + 1e-12)


def test_quality_equilateral_is_one():
    tri = M.Triangulation(np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]), np.array([[0, 1, 2]]))
    assert M.triangle_quality(tri, G.flat_torus().metric)[0] == pytest.approx(1.0, rel=1e-14)


def test_riemannian_area_torus():
    m = M.generate_structured(square(), 8)
    assert M.riemannian_area(m, G.standard_torus().metric) == pytest.approx(8 * math.pi**2, rel=1e-3)
    assert M.riemannian_area(m, G.flat_torus().metric) == pytest.approx(TWO_PI**2, rel=1e-14)


# ---------------------------------------------------------------------------
# gluing


def test_periodic_identification():
    m = M.generate_structured(square(G.Gluing.PERIODIC_BOTH), 10)
    vid = M.identify(m, G.Gluing.PERIODIC_BOTH)
    assert vid.n_classes == 100
    assert np.all(vid.signs == 1)
    assert not vid.dropped.any()


def test_klein_identification():
    m = M.generate_structured(square(G.Gluing.KLEIN_FLIP), 10)
    vid = M.identify(m, G.Gluing.KLEIN_FLIP)
    assert vid.n_classes == 100
    i = int(np.argmin(np.linalg.norm(m.vertices - [TWO_PI * 0.2, 0.0], axis=1)))
    j = int(np.argmin(np.linalg.norm(m.vertices - [TWO_PI * 0.8, TWO_PI], axis=1)))
    assert vid.representative[i] == vid.representative[j]
    assert vid.signs[i, 0] * vid.signs[j, 0] == -1
    assert vid.signs[i, 1] * vid.signs[j, 1] == 1


def test_no_gluing_is_identity():
    m = M.generate_structured(square(), 6)
    vid = M.identify(m, G.Gluing.NONE)
    np.testing.assert_array_equal(vid.representative, np.arange(m.n_vertices))
    assert np.all(vid.signs == 1)


@pytest.mark.parametrize("gluing", [G.Gluing.PERIODIC_BOTH, G.Gluing.KLEIN_FLIP])
def test_identification_idempotent_and_cycle_consistent(gluing):
    m = M.generate_structured(square(gluing), 8)
    vid = M.identify(m, gluing)
    # identification is deterministic and representatives are fixed points
    again = M.identify(m, gluing)
    np.testing.assert_array_equal(again.representative, vid.representative)
    np.testing.assert_array_equal(again.signs, vid.signs)
    np.testing.assert_array_equal(vid.representative[vid.representative], vid.representative)
    # every glued pair is related by the partner map with the expected signs
    left = np.flatnonzero(np.abs(m.vertices[:, 0]) < 1e-12)
    img, s = M.gluing_partner(m.vertices[left], gluing, "x1")
    for k, p in zip(left, img):
        j = int(np.argmin(np.linalg.norm(m.vertices - p, axis=1)))
        assert vid.representative[j] == vid.representative[k]
        if not vid.dropped[k, 0]:
            assert vid.signs[j, 0] * vid.signs[k, 0] == s
    bottom = np.flatnonzero(np.abs(m.vertices[:, 1]) < 1e-12)
    img, s = M.gluing_partner(m.vertices[bottom], gluing, "x2")
    for k, p in zip(bottom, img):
        j = int(np.argmin(np.linalg.norm(m.vertices - p, axis=1)))
        assert vid.representative[j] == vid.representative[k]
        if not vid.dropped[k, 0]:
            assert vid.signs[j, 0] * vid.signs[k, 0] == s


def test_klein_corners_form_one_consistent_class():
    # the sign product around the corner cycle (+1)(-1)(+1)(-1) is +1, so nothing is dropped
    m = M.generate_structured(square(G.Gluing.KLEIN_FLIP), 4)
    vid = M.identify(m, G.Gluing.KLEIN_FLIP)
    corners = [int(np.argmin(np.linalg.norm(m.vertices - c, axis=1)))
               for c in ([0, 0], [TWO_PI, 0], [0, TWO_PI], [TWO_PI, TWO_PI])]
    assert len(set(vid.representative[corners])) == 1
    assert not vid.dropped.any()


def test_klein_needs_matching_partners():
    pts = np.array([[0.3, 0.0], [1.0, 1.0]])
    with pytest.raises(M.GluingMismatchError):
        M.identify_points(pts, G.Gluing.KLEIN_FLIP)


# ---------------------------------------------------------------------------
# adaptation


def test_adapt_flat_is_fixed_point():
    flat = G.flat_torus()
    m = M.generate_structured(flat.chart, 8)
    h = M.edge_lengths(m, flat.metric)
    out = M.adapt(m, flat.metric, float(h.min()), flat.gluing)
    assert M.length_ratio(out, flat.metric) <= 1.05 * M.length_ratio(m, flat.metric)


def _adapted(name, n=20, start=10):
    man = G.get_manifold(name)
    base = M.generate_structured(man.chart, n)
    h = M.target_edge_length(base, man.metric, base.n_triangles)
    out = M.adapt(M.generate_structured(man.chart, start), man.metric, h, man.gluing)
    return man, base, out


@pytest.mark.parametrize("name", ["standard_torus", "klein_bottle"])
def test_adapt_improves_uniformity(name):
    man, base, out = _adapted(name)
    out.check(domain_area=TWO_PI**2, rtol=1e-9)
    before = M.length_ratio(base, man.metric)
    if name == "standard_torus":
        # axis edges alone give 3 (g22 = 9 against g11 = 1 at x1 = 0); diagonals stretch it further
        assert before >= 3.0
    assert M.length_ratio(out, man.metric) < before
    assert M.triangle_quality(out, man.metric).min() >= min(M.QUALITY_FLOOR, M.triangle_quality(base, man.metric).min())
    # glued vertices stay glued: identification succeeds and has the structured class count pattern
    vid = M.identify(out, man.gluing)
    assert vid.n_classes == out.n_vertices - np.sum(np.isclose(out.vertices, TWO_PI).any(axis=1))


def test_adapted_torus_lengths_less_spread():
    man, base, out = _adapted("standard_torus")
    assert abs(out.n_triangles / base.n_triangles - 1) < 0.25
    base_l = M.edge_lengths(base, man.metric)
    out_l = M.edge_lengths(out, man.metric)
    assert np.std(out_l) <= np.std(base_l)


def test_adapt_enneper_keeps_boundary():
    man = G.enneper()
    m = M.generate_structured(man.chart, 300)
    h = M.target_edge_length(m, man.metric, 300)
    out = M.adapt(m, man.metric, h)
    out.check()
    bverts = np.unique(m.boundary_edges)
    # free boundary vertices never move
    kept = {tuple(p) for p in out.vertices[np.unique(out.boundary_edges)]}
    assert all(tuple(p) in kept for p in m.vertices[bverts])


# ---------------------------------------------------------------------------
# file format


@pytest.mark.parametrize("name", ["standard_torus", "enneper"])
def test_mesh_file_round_trip_is_bit_exact(tmp_path, name):
    man = G.get_manifold(name)
    m = M.generate_structured(man.chart, 12 if man.chart.is_rectangle else 200)
    path = tmp_path / "m.txt"
    M.write_mesh(m, path)
    assert path.read_text().splitlines()[0] == "ntri-mesh 1"
    back = M.read_mesh(path)
    assert back.vertices.tobytes() == m.vertices.tobytes()
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.boundary_edges, m.boundary_edges)
    np.testing.assert_array_equal(back.boundary_tags, m.boundary_tags)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=6, max_size=6))
def test_mesh_file_round_trip_arbitrary_floats(tmp_path_factory, coords):
    verts = np.array(coords).reshape(3, 2)
    m = M.Triangulation(verts, np.array([[0, 1, 2]]))
    path = tmp_path_factory.mktemp("rt") / "m.txt"
    M.write_mesh(m, path)
    assert M.read_mesh(path).vertices.tobytes() == verts.tobytes()


def test_read_mesh_rejects_bad_header(tmp_path):
    p = tmp_path / "x.txt"
    p.write_text("something else\n")
    with pytest.raises(ValueError):
        M.read_mesh(p)
