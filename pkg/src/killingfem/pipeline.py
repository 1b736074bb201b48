"""End-to-end experiments: mesh, assemble, solve, measure, export."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, geometry
from .eigen import InternalSolverError, NotPositiveDefiniteError, SolverConfig, Spectrum, solve_smallest, \
    zero_eigenspace
from .fem import DiscreteField, PointOutsideMeshError, DofMap, SystemMatrices, assemble_all, element_from_name, interpolate
from .geometry import Gluing, Manifold
from .mesh import GluingMismatchError, InvalidMeshError, Triangulation, adapt, edge_lengths, generate_structured, target_edge_length
from .vtk import write_vtk


class ConfigError(ValueError):
    pass


class NotConvergedError(RuntimeError):
    """The eigensolver stopped before every requested pair met the tolerance."""


NUMERICAL_ERRORS = (
    NotPositiveDefiniteError, np.linalg.LinAlgError, InternalSolverError, NotConvergedError,
    geometry.DegenerateMetricError, InvalidMeshError, GluingMismatchError, PointOutsideMeshError,
    analysis.DegenerateSpanError, FloatingPointError,
)

_CATEGORIES = [
    (NotPositiveDefiniteError, "not_positive_definite"),
    (NotConvergedError, "not_converged"),
    (InternalSolverError, "solver_breakdown"),
    (np.linalg.LinAlgError, "linear_algebra"),
    (geometry.DegenerateMetricError, "degenerate_metric"),
    (GluingMismatchError, "gluing_mismatch"),
    (InvalidMeshError, "invalid_mesh"),
    (PointOutsideMeshError, "point_outside_mesh"),
    (analysis.DegenerateSpanError, "degenerate_span"),
    (ConfigError, "config"),
]


def error_category(exc: BaseException) -> str:
    """Machine-readable category for a failure."""
    for cls, name in _CATEGORIES:
        if isinstance(exc, cls):
            return name
    return "numerical"


@dataclass
class ExperimentConfig:
    manifold: str = "standard_torus"
    problem: str = "K"
    element: str = "P2"
    n: int | None = 16
    target_h: float | None = None
    adapt: bool = False
    adapt_iterations: int = 6
    k: int = 6
    tol: float = 1e-10
    shift: float = -0.01
    max_iterations: int = 300
    block_size: int = 4
    seed: int = 0
    gap_factor: float = 1e3
    noise_floor: float = 1e-8
    outputs: str = "out"
    resolutions: list | None = None
    threads: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if self.manifold not in geometry.CATALOG:
            raise ConfigError(f"unknown manifold {self.manifold!r}; choose from {sorted(geometry.CATALOG)}")
        if str(self.problem).upper() not in ("K", "CK"):
            raise ConfigError("problem must be 'K' or 'CK'")
        self.problem = str(self.problem).upper()
        try:
            element_from_name(str(self.element))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.element = str(self.element).upper()
        if self.n is None and self.target_h is None:
            raise ConfigError("either n or target_h is required")
        if self.n is not None and (not isinstance(self.n, int) or self.n < 1):
            raise ConfigError("n must be a positive integer")
        if self.target_h is not None and not self.target_h > 0:
            raise ConfigError("target_h must be positive")
        if self.manifold == "klein_bottle" and self.n is not None and self.n % 2:
            raise ConfigError("the Klein bottle gluing needs an even grid size n")
        if self.target_h is not None and not self.adapt:
            raise ConfigError("target_h only applies with adapt enabled")
        if self.resolutions is not None:
            if not isinstance(self.resolutions, list) or not all(isinstance(r, int) and r > 0
                                                               for r in self.resolutions):
                raise ConfigError("resolutions must be a list of positive integers")
        if not self.noise_floor >= 0:
            raise ConfigError("noise_floor must be nonnegative")
        if not self.gap_factor > 1:
            raise ConfigError("gap_factor must exceed 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        try:
            self.solver_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def solver_config(self) -> SolverConfig:
        return SolverConfig(k=self.k, tol=self.tol, shift=self.shift, max_iterations=self.max_iterations,
                            block_size=self.block_size, seed=self.seed)


def build_mesh(cfg: ExperimentConfig, manifold: Manifold) -> Triangulation:
    """Structured mesh of size n; with adapt, a metric-adapted mesh of about the same triangle count.

    Adaptation starts from a coarser grid on rectangles (free boundaries keep
    their discretization, so curved domains start from the size-n mesh).
    Without an explicit target_h the target length is rescaled until the
    adapted triangle count is within 5% of the structured one.
    """
    n = cfg.n if cfg.n is not None else 16
    base = generate_structured(manifold.chart, n)
    if not cfg.adapt:
        return base
    start = base
    if manifold.chart.is_rectangle:
        m = max(4, n // 2)
        start = generate_structured(manifold.chart, m + (m % 2))
    if cfg.target_h:
        return adapt(start, manifold.metric, cfg.target_h, manifold.gluing, cfg.adapt_iterations)
    target = base.n_triangles
    h = target_edge_length(base, manifold.metric, target)
    best = None
    for _ in range(4):
        mesh = adapt(start, manifold.metric, h, manifold.gluing, cfg.adapt_iterations)
        if best is None or abs(mesh.n_triangles - target) < abs(best.n_triangles - target):
            best = mesh
        if abs(mesh.n_triangles / target - 1) <= 0.05:
            break
        h *= math.sqrt(mesh.n_triangles / target)
    return best


def exact_fields(manifold: Manifold, problem: str) -> list:
    fields = list(manifold.known_killing)
    if problem == "CK":
        fields += list(manifold.known_conformal_killing)
    return fields


@dataclass
class SolveResult:
    config: ExperimentConfig
    manifold: Manifold
    mesh: Triangulation
    dofmap: DofMap
    matrices: SystemMatrices
    spectrum: Spectrum
    zero_modes: object
    reports: list = field(default_factory=list)
    ricci: dict = field(default_factory=dict)

    def discrete(self, j: int) -> DiscreteField:
        return DiscreteField(self.spectrum.eigenvectors[:, j], self.mesh, self.dofmap)

    def mode_fields(self) -> list[DiscreteField]:
        d = self.zero_modes.dimension
        return [self.discrete(j) for j in range(d)]

    def report(self) -> dict:
        lengths = edge_lengths(self.mesh, self.manifold.metric)
        lam = self.spectrum.eigenvalues
        return {
            "manifold": self.manifold.name,
            "problem": self.config.problem,
            "element": self.config.element,
            "adapted": bool(self.config.adapt),
            "mesh": {"vertices": self.mesh.n_vertices, "triangles": self.mesh.n_triangles,
                     "dofs": self.dofmap.n_dofs, "max_edge_length": float(lengths.max()),
                     "min_edge_length": float(lengths.min())},
            "eigenvalues": [float(x) for x in lam],
            "residuals": [float(x) for x in self.spectrum.residuals],
            "converged": bool(self.spectrum.converged),
            "iterations": int(self.spectrum.iterations),
            "zero_mode_count": int(self.zero_modes.dimension),
            "zero_mode_inconclusive": bool(self.zero_modes.inconclusive),
            "zero_mode_gap": _finite_or_str(self.zero_modes.gap),
            "fields": [r.to_dict() for r in self.reports],
            "ricci_residuals": {k: float(v) for k, v in self.ricci.items()},
            "summary": {
                "eigenvalues_magnitude": [_magnitude(x) for x in lam],
                "l2_magnitude": {r.name: _magnitude(r.l2_rel) for r in self.reports},
                "h1_magnitude": {r.name: _magnitude(r.h1_rel) for r in self.reports},
            },
            "config": self.config.to_dict(),
        }


def _finite_or_str(x: float):
    return float(x) if math.isfinite(x) else str(x)


def _magnitude(x: float) -> str:
    x = abs(float(x))
    if x == 0 or not math.isfinite(x):
        return str(x)
    return f"1e{math.floor(math.log10(x)):+03d}"


def associated_eigenvalue(result_spectrum: Spectrum, M, exact_values: np.ndarray) -> tuple[int, float]:
    """Index and eigenvalue of the computed mode with the largest M-projection of ``exact_values``."""
    proj = result_spectrum.eigenvectors.T @ (M @ exact_values)
    j = int(np.argmax(np.abs(proj)))
    return j, float(result_spectrum.eigenvalues[j])


def solve_on_mesh(cfg: ExperimentConfig, manifold: Manifold, mesh: Triangulation,
                  with_reports: bool = True) -> SolveResult:
    element = element_from_name(cfg.element)
    dofmap = DofMap.build(mesh, element, manifold.gluing)
    mats = assemble_all(mesh, manifold.metric, element, dofmap)
    A = mats.stiffness(cfg.problem)
    spectrum = solve_smallest(A, mats.mass, cfg.solver_config())
    zs = zero_eigenspace(spectrum, mats.mass, cfg.gap_factor, cfg.noise_floor)
    result = SolveResult(cfg, manifold, mesh, dofmap, mats, spectrum, zs)
    if with_reports:
        exact = exact_fields(manifold, cfg.problem)
        if exact:
            # the lowest len(exact) modes approximate the analytic fields even when
            # coarse meshes lift some of them above the gap cutoff
            d = min(max(zs.dimension, len(exact)), len(spectrum))
            computed = [result.discrete(j) for j in range(d)]
            for e in exact:
                interp = interpolate(e, mesh, dofmap).values
                _, lam = associated_eigenvalue(spectrum, mats.mass, interp)
                result.reports.append(analysis.error_report(e.name, computed, e, mesh,
                                                            manifold.metric, lam))
        if manifold.gluing is not Gluing.NONE:
            for e in manifold.known_killing:
                result.ricci[e.name] = analysis.ricci_identity_residual(e, mesh, manifold.metric, "Killing")
            for e in manifold.known_conformal_killing:
                result.ricci[e.name] = analysis.ricci_identity_residual(e, mesh, manifold.metric,
                                                                        "Conformal")
    return result


def run_solve(cfg: ExperimentConfig) -> SolveResult:
    manifold = geometry.get_manifold(cfg.manifold)
    mesh = build_mesh(cfg, manifold)
    return solve_on_mesh(cfg, manifold, mesh)


def field_node_values(result: SolveResult) -> dict[str, np.ndarray]:
    out = {}
    for j in range(max(result.zero_modes.dimension, 1)):
        out[f"mode_{j}"] = result.dofmap.expand(result.spectrum.eigenvectors[:, j])
    for e in exact_fields(result.manifold, result.config.problem):
        out[f"exact_{_slug(e.name)}"] = interpolate(e, result.mesh, result.dofmap).node_values()
    return out


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_") or "field"


def write_solve_outputs(result: SolveResult, outdir) -> dict:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    result.spectrum.write_csv(out / "spectrum.csv")
    write_vtk(out / "fields.vtk", result.mesh, result.dofmap, field_node_values(result),
              title=f"{result.manifold.name} {result.config.problem} {result.config.element}")
    report = result.report()
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


# ---------------------------------------------------------------------------
# convergence


def field_tags(manifold: Manifold, problem: str) -> list[str]:
    tags = [f"killing_{i}" for i in range(len(manifold.known_killing))]
    if problem == "CK":
        tags += [f"conformal_{i}" for i in range(len(manifold.known_conformal_killing))]
    return tags


def _convergence_run(cfg: ExperimentConfig, n: int) -> tuple[str, object]:
    """Solve at grid size n; return ("ok", rows-per-field) or ("failed", category)."""
    manifold = geometry.get_manifold(cfg.manifold)
    run_cfg = cfg.replace(n=int(n))
    label = f"n={int(n)}"
    try:
        mesh = build_mesh(run_cfg, manifold)
        result = solve_on_mesh(run_cfg, manifold, mesh)
    except NUMERICAL_ERRORS as exc:
        return "failed", error_category(exc)
    h = float(edge_lengths(mesh, manifold.metric).max())
    return "ok", [analysis.ConvergenceRow(h, mesh.n_triangles, abs(rep.eigenvalue), rep.l2_rel,
                                          rep.h1_rel, label) for rep in result.reports]


def run_convergence(cfg: ExperimentConfig, resolutions=None,
                    workers: int | None = None) -> dict[str, analysis.ConvergenceStudy]:
    """One solve per grid size; a convergence study per analytic field.

    A resolution whose solve fails numerically is recorded as a failure
    marker in every study and the remaining resolutions still run.  With
    more than one worker the resolutions run in separate processes; each
    run is independent, so the results do not depend on the worker count.
    """
    sizes = [int(n) for n in (resolutions or cfg.resolutions or [])]
    if len(sizes) < 4:
        raise ConfigError("a convergence study needs at least 4 resolutions")
    for n in sizes:
        cfg.replace(n=n)
    manifold = geometry.get_manifold(cfg.manifold)
    if not exact_fields(manifold, cfg.problem):
        raise ConfigError(f"{manifold.name} has no analytic fields for problem {cfg.problem}")
    tags = field_tags(manifold, cfg.problem)
    workers = cfg.threads if workers is None else workers
    if workers > 1 and len(sizes) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(workers, len(sizes))) as pool:
            outcomes = list(pool.map(_convergence_run, [cfg] * len(sizes), sizes))
    else:
        outcomes = [_convergence_run(cfg, n) for n in sizes]
    studies = {t: analysis.ConvergenceStudy(t) for t in tags}
    for n, (status, payload) in zip(sizes, outcomes):
        if status == "failed":
            for study in studies.values():
                study.add_failure(f"n={n}", payload)
            continue
        for tag, row in zip(tags, payload):
            studies[tag].add(row)
    return studies


def _study_orders(study: analysis.ConvergenceStudy) -> dict[str, float]:
    out = {}
    for key in analysis.COLUMNS:
        try:
            out[key] = analysis.fit_order(study.h, study.column(key))
        except analysis.InsufficientDataError:
            out[key] = float("nan")
    return out


def write_convergence_outputs(studies: dict, outdir) -> dict:
    """Write convergence.csv, orders.csv and orders.json; return the orders summary."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["field", "run", "h", "ntri", "eigenvalue", "l2_rel", "h1_rel", "status"])
        for tag, study in studies.items():
            for r in study.rows:
                w.writerow([tag, r.label, f"{r.h:.17g}", r.ntri, f"{r.eigenvalue:.17g}",
                            f"{r.l2_rel:.17g}", f"{r.h1_rel:.17g}", "ok"])
            for label, category in study.failures:
                w.writerow([tag, label, "nan", "", "nan", "nan", "nan", f"failed:{category}"])
    with open(out / "orders.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["field", "column", "order", "saturated"])
        for tag, study in studies.items():
            orders = _study_orders(study)
            for key in analysis.COLUMNS:
                w.writerow([tag, key, f"{orders[key]:.17g}", int(study.saturated(key))])
            summary[tag] = {"orders": {k: _finite_or_str(v) for k, v in orders.items()},
                            "saturated": {k: study.saturated(k) for k in analysis.COLUMNS},
                            "failures": [list(f) for f in study.failures]}
    (out / "orders.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
