from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.integrate
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import structured_system
from killingfem import geometry as G
from killingfem.eigen import SparseCholesky
from killingfem.fem import (
    P1, P2, DiscreteField, DofMap, ElementGeometry, PointOutsideMeshError, SymSparseMatrix, assemble_all,
    assemble_killing, assemble_mass, constrain, element_from_name, element_killing, interpolate, locate,
    quadrature_degree5,
)
from killingfem.fem.elements import EDGE_VERTICES
from killingfem.mesh import Triangulation, adapt, generate_structured, target_edge_length

TWO_PI = 2 * math.pi


# ---------------------------------------------------------------------------
# quadrature and reference elements


def monomial_integral(a: int, b: int) -> float:
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def test_quadrature_examples():
    rule = quadrature_degree5()
    assert rule.integrate_reference(lambda x, y: np.ones_like(x)) == pytest.approx(0.5, abs=1e-16)
    assert rule.integrate_reference(lambda x, y: x**5) == pytest.approx(1 / 42, abs=1e-16)
    assert rule.integrate_reference(lambda x, y: x**2 * y**3) == pytest.approx(1 / 420, abs=1e-16)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(rule.weights > 0) and np.all(rule.points > 0)


@pytest.mark.parametrize("a,b", [(a, b) for a in range(6) for b in range(6 - a)])
def test_quadrature_exact_through_degree_five(a, b):
    got = quadrature_degree5().integrate_reference(lambda x, y: x**a * y**b)
    assert abs(got - monomial_integral(a, b)) <= 1e-14


def test_quadrature_not_exact_at_degree_six():
    got = quadrature_degree5().integrate_reference(lambda x, y: x**6)
    assert abs(got - monomial_integral(6, 0)) > 1e-8


@pytest.mark.parametrize("element", [P1, P2])
def test_shape_functions_partition_and_nodality(element):
    nodes = element.nodes
    np.testing.assert_allclose(element.values(nodes), np.eye(element.n_nodes), atol=1e-14)
    bary = np.random.default_rng(0).dirichlet([1, 1, 1], 20)
    np.testing.assert_allclose(element.values(bary).sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(element.gradients(bary).sum(axis=1), 0.0, atol=1e-13)


@pytest.mark.parametrize("element", [P1, P2])
def test_shape_gradients_match_differences(element):
    bary = np.array([[0.2, 0.3, 0.5]])
    h = 1e-6
    grads = element.gradients(bary)[0]
    for d in range(2):
        e = np.zeros(3)
        e[d + 1], e[0] = h, -h
        fd = (element.values(bary + e) - element.values(bary - e))[0] / (2 * h)
        np.testing.assert_allclose(grads[:, d], fd, atol=1e-8)


def test_element_lookup():
    assert element_from_name("p2").name == "P2"
    with pytest.raises(ValueError):
        element_from_name("P3")
    np.testing.assert_array_equal(EDGE_VERTICES, [[0, 1], [1, 2], [2, 0]])


# ---------------------------------------------------------------------------
# sparse storage


def test_sparse_sums_duplicates_and_matches_dense(rng):
    n = 7
    rows = rng.integers(0, n, 60)
    cols = rng.integers(0, n, 60)
    vals = rng.normal(size=60)
    full_r = np.concatenate([rows, cols])
    full_c = np.concatenate([cols, rows])
    full_v = np.concatenate([vals, vals])
    A = SymSparseMatrix.from_entries(n, full_r, full_c, full_v)
    dense = np.zeros((n, n))
    np.add.at(dense, (full_r, full_c), full_v)
    np.testing.assert_allclose(A.to_dense(), dense, atol=1e-14)
    x = rng.normal(size=(n, 3))
    np.testing.assert_allclose(A @ x, dense @ x, atol=1e-13)
    np.testing.assert_allclose(A.diagonal(), np.diag(dense))
    assert A.quadratic_form(x[:, 0]) == pytest.approx(x[:, 0] @ dense @ x[:, 0])
    with pytest.raises(IndexError):
        SymSparseMatrix.from_entries(3, [0], [3], [1.0])


def test_coordinate_export_round_trip(tmp_path):
    _, _, _, mats = structured_system("klein_bottle", "P1", 4)
    path = tmp_path / "mass.txt"
    mats.mass.write_coordinate(path)
    lines = path.read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("%")]
    i, j, v = body[0].split()
    assert int(i) >= 0 and int(j) >= 0
    back = SymSparseMatrix.read_coordinate(path)
    assert (back.to_dense() == mats.mass.to_dense()).all()


# ---------------------------------------------------------------------------
# dof maps


@pytest.mark.parametrize("name,element,factor", [
    ("flat_torus", "P1", 2), ("standard_torus", "P2", 8), ("klein_bottle", "P1", 2), ("klein_bottle", "P2", 8),
])
def test_dof_counts_on_closed_surfaces(name, element, factor):
    _, mesh, dm, _ = structured_system(name, element, 6)
    assert dm.n_dofs == factor * 36


def test_expand_restrict_round_trip(rng):
    _, mesh, dm, _ = structured_system("klein_bottle", "P2", 4)
    x = rng.normal(size=dm.n_dofs)
    np.testing.assert_array_equal(dm.restrict(dm.expand(x)), x)
    nodes = dm.expand(x)
    # glued nodes carry the same class value, flipped in u1 across the Klein edge
    left = np.flatnonzero(np.abs(dm.node_coords[:, 1]) < 1e-12)
    for k in left:
        p = dm.node_coords[k]
        j = int(np.argmin(np.linalg.norm(dm.node_coords - [TWO_PI - p[0], TWO_PI], axis=1)))
        np.testing.assert_allclose(nodes[j], nodes[k] * [-1, 1])


def _constraint_matrix(glued: DofMap, free: DofMap) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for node in range(glued.n_nodes):
        for c in range(2):
            if glued.dof[node, c] >= 0:
                rows.append(free.dof[node, c])
                cols.append(glued.dof[node, c])
                vals.append(glued.component_sign[node, c])
    return sp.csr_matrix((vals, (rows, cols)), shape=(free.n_dofs, glued.n_dofs))


@pytest.mark.parametrize("element", [P1, P2])
def test_klein_gluing_equals_signed_restriction_of_unglued(element):
    man = G.klein_bottle()
    mesh = generate_structured(man.chart, 2)
    free = DofMap.build(mesh, element, G.Gluing.NONE)
    glued = DofMap.build(mesh, element, G.Gluing.KLEIN_FLIP)
    P = _constraint_matrix(glued, free)
    for assemble in (assemble_mass, assemble_killing):
        A0 = assemble(mesh, man.metric, element, free).to_csr()
        A = assemble(mesh, man.metric, element, glued).to_dense()
        np.testing.assert_allclose(A, A.T, atol=0)
        np.testing.assert_allclose(A, (P.T @ A0 @ P).toarray(), atol=1e-13 * np.abs(A).max())


def test_klein_sign_enters_off_diagonal_coupling():
    man = G.klein_bottle()
    mesh = generate_structured(man.chart, 2)
    glued = DofMap.build(mesh, P1, G.Gluing.KLEIN_FLIP)
    local = np.zeros((mesh.n_triangles, 6, 6))
    dofs, signs = glued.element_dofs()
    # a single unit coupling between local dofs a, b of one triangle whose signs differ
    t, a, b = next((t, a, b) for t in range(mesh.n_triangles) for a in range(6) for b in range(6)
                   if signs[t, a] * signs[t, b] == -1 and dofs[t, a] != dofs[t, b])
    local[t, a, b] = local[t, b, a] = 1.0
    A = constrain(glued, local).to_dense()
    assert A[dofs[t, a], dofs[t, b]] == -1.0


# ---------------------------------------------------------------------------
# assembly


def test_unit_triangle_mass_block():
    mesh = Triangulation(np.array([[0.0, 0.0], [math.sqrt(2), 0.0], [0.0, math.sqrt(2)]]), np.array([[0, 1, 2]]))
    dm = DofMap.build(mesh, P1)
    M = assemble_mass(mesh, G.flat_torus().metric, P1, dm).to_dense()
    same = M[0::2, 0::2]
    np.testing.assert_allclose(np.diag(same), 1 / 6, rtol=1e-14)
    np.testing.assert_allclose(same[~np.eye(3, dtype=bool)], 1 / 12, rtol=1e-14)
    np.testing.assert_allclose(M[0::2, 1::2], 0, atol=1e-16)
    np.testing.assert_allclose(M[1::2, 1::2], same)


def test_mass_total_flat_torus():
    _, mesh, dm, mats = structured_system("flat_torus", "P1", 8)
    e = interpolate(G.flat_torus().known_killing[0], mesh, dm).values
    assert mats.mass.quadratic_form(e) == pytest.approx(4 * math.pi**2, rel=1e-13)


def test_mass_total_standard_torus_against_1d_quadrature():
    oracle = TWO_PI * scipy.integrate.quad(lambda t: (2 + math.cos(t)) ** 3, 0, TWO_PI, epsabs=1e-14)[0]
    assert oracle == pytest.approx(44 * math.pi**2, rel=1e-13)
    man, mesh, dm, mats = structured_system("standard_torus", "P2", 16)
    e = interpolate(man.known_killing[0], mesh, dm).values
    # the integrand (2 + cos x1)^3 is not polynomial: degree-5 quadrature on 512 triangles
    assert mats.mass.quadratic_form(e) == pytest.approx(oracle, rel=1e-8)


def test_flat_torus_constants_in_both_kernels():
    _, mesh, dm, mats = structured_system("flat_torus", "P1", 6)
    for f in G.flat_torus().known_killing:
        e = interpolate(f, mesh, dm).values
        assert np.abs(mats.killing @ e).max() <= 1e-13
        assert np.abs(mats.conformal @ e).max() <= 1e-13


def rounding_scale(A: SymSparseMatrix, u) -> float:
    """eps |u|^T |A| |u|: the floating-point resolution of the assembled form u^T A u."""
    upper = abs(A.to_csr())
    full = upper + upper.T - sp.diags(upper.diagonal())
    return float(np.finfo(float).eps * (np.abs(u) @ (full @ np.abs(u))))


@pytest.mark.parametrize("n", [4, 8, 16, 32])
@pytest.mark.parametrize("element", ["P1", "P2"])
def test_torus_killing_energy_vanishes_on_every_mesh(n, element):
    man, mesh, dm, mats = structured_system("standard_torus", element, n)
    f = interpolate(man.known_killing[0], mesh, dm)
    u = f.values
    # the integrand cancels pointwise; the assembled form then holds only summation rounding
    assert abs(mats.killing.quadratic_form(u)) <= rounding_scale(mats.killing, u)
    assert abs(mats.killing.quadratic_form(u)) <= 1e-14 * mats.mass.quadratic_form(u)
    assert abs(_energy_by_quadrature(f, f, man.metric, False)) <= 1e-14 * mats.mass.quadratic_form(u)


def test_torus_killing_energy_on_adapted_mesh():
    man = G.standard_torus()
    base = generate_structured(man.chart, 8)
    mesh = adapt(base, man.metric, target_edge_length(base, man.metric, 300), man.gluing)
    dm = DofMap.build(mesh, P2, man.gluing)
    mats = assemble_all(mesh, man.metric, P2, dm)
    u = interpolate(man.known_killing[0], mesh, dm).values
    assert abs(mats.killing.quadratic_form(u)) <= rounding_scale(mats.killing, u)


def test_enneper_rotation_energy_is_rounding():
    man, mesh, dm, mats = structured_system("enneper", "P1", 200)
    u = interpolate(man.known_killing[0], mesh, dm).values
    assert abs(mats.killing.quadratic_form(u)) <= 1e-14 * mats.mass.quadratic_form(u)


def _energy_by_quadrature(field_u, field_v, metric, conformal):
    """Integrand evaluated pointwise from field values, independent of the assembly path."""
    rule = quadrature_degree5()
    geo = ElementGeometry.build(field_u.mesh, metric, field_u.element, rule)
    u, du = field_u.at_quadrature(rule)
    v, dv = field_v.at_quadrature(rule)
    nu = G.covariant_derivative(metric, geo.points, u, du)
    nv = G.covariant_derivative(metric, geo.points, v, dv)
    g = metric.g(geo.points)
    ginv = np.linalg.inv(g)
    val = np.einsum("tqkl,tqjm,tqkj,tqlm->tq", g, ginv, nu, nv) + np.einsum("tqkj,tqjk->tq", nu, nv)
    if conformal:
        val -= np.einsum("tqkk->tq", nu) * np.einsum("tqkk->tq", nv)
    return float(np.sum(geo.weights * val))


@pytest.mark.parametrize("name,element,n", [("standard_torus", "P2", 4), ("klein_bottle", "P1", 6),
                                            ("enneper", "P1", 80), ("klein_bottle", "P2", 4)])
def test_quadratic_form_matches_direct_quadrature(name, element, n, rng):
    man, mesh, dm, mats = structured_system(name, element, n)
    for _ in range(3):
        a, b = rng.normal(size=dm.n_dofs), rng.normal(size=dm.n_dofs)
        fa, fb = DiscreteField(a, mesh, dm), DiscreteField(b, mesh, dm)
        for conformal, A in ((False, mats.killing), (True, mats.conformal)):
            direct = _energy_by_quadrature(fa, fb, man.metric, conformal)
            assert A.quadratic_form(a, b) == pytest.approx(direct, rel=1e-12)


@pytest.mark.parametrize("name,element,n", [("standard_torus", "P2", 6), ("klein_bottle", "P1", 8),
                                            ("enneper", "P1", 100), ("flat_torus", "P1", 6)])
def test_mass_is_positive_definite(name, element, n):
    _, _, _, mats = structured_system(name, element, n)
    chol = SparseCholesky(mats.mass)
    assert np.isfinite(chol.logdet())


@given(st.integers(0, 2**32 - 1), st.sampled_from(["standard_torus", "klein_bottle", "enneper", "flat_torus"]))
def test_energy_ordering_property(seed, name):
    n = 100 if name == "enneper" else 6
    _, _, dm, mats = structured_system(name, "P1", n)
    x = np.random.default_rng(seed).normal(size=(dm.n_dofs, 8))
    k = np.einsum("ij,ij->j", x, mats.killing @ x)
    c = np.einsum("ij,ij->j", x, mats.conformal @ x)
    m = np.einsum("ij,ij->j", x, mats.mass @ x)
    assert np.all(k >= c - 1e-12 * np.abs(k))
    assert np.all(c >= -1e-10 * m)


def test_element_killing_is_symmetric():
    man, mesh, dm, _ = structured_system("standard_torus", "P2", 4)
    geo = ElementGeometry.build(mesh, man.metric, P2)
    loc = element_killing(geo)
    np.testing.assert_allclose(loc, np.swapaxes(loc, 1, 2), atol=1e-12 * np.abs(loc).max())


# ---------------------------------------------------------------------------
# discrete fields


def test_interpolated_constant_evaluates_exactly():
    _, mesh, dm, _ = structured_system("flat_torus", "P2", 4)
    f = interpolate(G.flat_torus().known_killing[0], mesh, dm)
    pts = np.random.default_rng(1).uniform(0, TWO_PI, (30, 2))
    u, du = f.evaluate(pts)
    np.testing.assert_allclose(u, np.tile([1.0, 0.0], (30, 1)), atol=1e-14)
    np.testing.assert_allclose(du, 0.0, atol=1e-13)


def test_p2_reproduces_quadratics():
    mesh = generate_structured(G.ChartDomain(rectangle=(0.0, 1.0, 0.0, 1.0)), 3)
    dm = DofMap.build(mesh, P2)
    quad = G.AnalyticVectorField(
        u=lambda x: np.stack([x[..., 0] ** 2 - x[..., 0] * x[..., 1], 3 * x[..., 1] ** 2 + x[..., 0]], axis=-1),
        du=lambda x: np.stack([np.stack([2 * x[..., 0] - x[..., 1], -x[..., 0]], -1),
                               np.stack([np.ones_like(x[..., 0]), 6 * x[..., 1]], -1)], -2))
    f = interpolate(quad, mesh, dm)
    pts = np.random.default_rng(2).uniform(0, 1, (50, 2))
    u, du = f.evaluate(pts)
    np.testing.assert_allclose(u, quad.u(pts), atol=1e-12)
    np.testing.assert_allclose(du, quad.du(pts), atol=1e-11)


def test_p1_reproduces_rotation_on_enneper():
    man, mesh, dm, _ = structured_system("enneper", "P1", 200)
    f = interpolate(man.known_killing[0], mesh, dm)
    pts = G.sample_points(man, 50, margin=0.05)
    u, du = f.evaluate(pts)
    np.testing.assert_allclose(u, man.known_killing[0].u(pts), atol=1e-13)
    np.testing.assert_allclose(du, man.known_killing[0].du(pts), atol=1e-12)


def test_locate_outside_raises():
    mesh = generate_structured(G.ChartDomain(rectangle=(0.0, 1.0, 0.0, 1.0)), 2)
    tri, bary = locate(mesh, np.array([[0.25, 0.6]]))
    np.testing.assert_allclose(bary.sum(), 1.0)
    with pytest.raises(PointOutsideMeshError):
        locate(mesh, np.array([[1.5, 0.5]]))
