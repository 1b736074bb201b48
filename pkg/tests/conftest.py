from __future__ import annotations

import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from killingfem import geometry
from killingfem.fem import DofMap, assemble_all, element_from_name
from killingfem.mesh import generate_structured

settings.register_profile("repo", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@functools.lru_cache(maxsize=None)
def structured_system(name: str, element: str, n: int):
    """(manifold, mesh, dofmap, matrices) on the structured size-n mesh, cached across tests."""
    manifold = geometry.get_manifold(name)
    mesh = generate_structured(manifold.chart, n)
    el = element_from_name(element)
    dofmap = DofMap.build(mesh, el, manifold.gluing)
    return manifold, mesh, dofmap, assemble_all(mesh, manifold.metric, el, dofmap)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def eigenvalue_clusters(values, rtol: float = 1e-6, atol: float = 1e-9) -> list[list[int]]:
    """Consecutive indices whose eigenvalues agree to max(atol, rtol * |lam|)."""
    groups = [[0]]
    for i in range(1, len(values)):
        if abs(values[i] - values[i - 1]) <= max(atol, rtol * abs(values[i])):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def cluster_angle_sines(X, Y, M, clusters) -> list[float]:
    """Largest principal-angle sine between matching M-orthonormal eigenvector clusters."""
    out = []
    for idx in clusters:
        s = np.linalg.svd(X[:, idx].T @ (M @ Y[:, idx]), compute_uv=False)
        out.append(float(np.sqrt(max(0.0, 1.0 - s.min() ** 2))))
    return out


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_criterion(cid: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {cid}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
