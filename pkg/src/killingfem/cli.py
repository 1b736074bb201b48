"""Command-line front end: ``killingfem solve | convergence | export``.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
failures.  Failures print one JSON object ``{"error": category, "message": ...}``
on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import geometry
from .fem import DofMap, element_from_name
from .mesh import read_mesh
from .pipeline import (
    NUMERICAL_ERRORS,
    ConfigError,
    ExperimentConfig,
    NotConvergedError,
    error_category,
    run_convergence,
    run_solve,
    write_convergence_outputs,
    write_solve_outputs,
)
from .vtk import write_vtk

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# flag dest -> config key; every flag defaults to None so that only explicit flags override the file
_CONFIG_FLAGS = [
    ("manifold", str, "catalog manifold: " + ", ".join(sorted(geometry.CATALOG))),
    ("problem", str, "K (Killing) or CK (conformal Killing)"),
    ("element", str, "P1 or P2"),
    ("n", int, "structured grid size (curved domains: target triangle count)"),
    ("target_h", float, "target Riemannian edge length for adaptation"),
    ("adapt_iterations", int, "adaptation sweeps"),
    ("k", int, "number of eigenpairs"),
    ("tol", float, "relative residual tolerance"),
    ("shift", float, "spectral shift, in units of the mean diagonal ratio of A and M"),
    ("max_iterations", int, "eigensolver iteration cap"),
    ("block_size", int, "Lanczos block size"),
    ("seed", int, "random seed of the starting block"),
    ("gap_factor", float, "spectral gap marking the zero eigenspace"),
    ("noise_floor", float, "eigenvalues below this count as zero in the gap rule"),
    ("outputs", str, "output directory; all written files go here"),
    ("threads", int, "worker processes for convergence studies"),
]


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with the configuration code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        _report_failure("config", message)
        raise SystemExit(EXIT_CONFIG)


def _report_failure(category: str, message: str) -> None:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file (flat keys mirroring the flags)")
    for key, typ, text in _CONFIG_FLAGS:
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=text)
    p.add_argument("--adapt", dest="adapt", action="store_true", default=None, help="adapt the mesh to the metric")
    p.add_argument("--no-adapt", dest="adapt", action="store_false", help="use the structured mesh")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="killingfem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    solve = sub.add_parser("solve", help="compute the smallest eigenpairs and the zero eigenspace")
    _add_config_flags(solve)

    conv = sub.add_parser("convergence", help="solve on a sequence of grid sizes and fit orders")
    _add_config_flags(conv)
    conv.add_argument("--resolutions", type=int, nargs="+", default=None, help="grid sizes (at least 4)")

    export = sub.add_parser("export", help="write a mesh and nodal vector fields as legacy VTK")
    export.add_argument("--mesh", type=Path, required=True, help="mesh file written by write_mesh")
    export.add_argument("--element", default="P1", help="P1 or P2 node layout of the field files")
    export.add_argument("--field", action="append", default=[], metavar="NAME=PATH",
                        help="text file with one 'u1 u2' row per node; repeatable")
    export.add_argument("--outputs", default=".", help="output directory")
    export.add_argument("--name", default="fields.vtk", help="output file name")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """File values first, then every explicitly given flag."""
    data = {}
    if args.config is not None:
        data = ExperimentConfig.from_json(args.config).to_dict()
    keys = [k for k, _, _ in _CONFIG_FLAGS] + ["adapt"]
    if getattr(args, "resolutions", None) is not None:
        keys.append("resolutions")
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if "target_h" in data and "n" not in data and data.get("target_h") is not None:
        data["n"] = None
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_solve(cfg: ExperimentConfig) -> dict:
    result = run_solve(cfg)
    report = write_solve_outputs(result, cfg.outputs)
    print(f"{report['manifold']} {report['problem']} {report['element']}: "
          f"{report['mesh']['triangles']} triangles, zero modes {report['zero_mode_count']}")
    for j, lam in enumerate(report["eigenvalues"]):
        print(f"  lambda_{j} = {lam:.6e}")
    if not result.spectrum.converged:
        raise NotConvergedError(f"eigenpairs not converged to tol={cfg.tol} after "
                                f"{result.spectrum.iterations} iterations (outputs written)")
    return report


def cmd_convergence(cfg: ExperimentConfig) -> dict:
    studies = run_convergence(cfg)
    summary = write_convergence_outputs(studies, cfg.outputs)
    for tag, entry in summary.items():
        orders = ", ".join(f"{k}={v if isinstance(v, str) else f'{v:.2f}'}" for k, v in entry["orders"].items())
        print(f"{tag}: {orders}")
    return summary


def _read_field(spec: str) -> tuple[str, np.ndarray]:
    name, sep, path = spec.partition("=")
    if not sep or not name or not path:
        raise ConfigError(f"field must be NAME=PATH, got {spec!r}")
    try:
        values = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read field {path}: {exc}") from exc
    if values.shape[1] != 2:
        raise ConfigError(f"field {name}: expected two columns, got {values.shape[1]}")
    return name, values


def cmd_export(args: argparse.Namespace) -> Path:
    try:
        element = element_from_name(args.element)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        mesh = read_mesh(args.mesh)
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigError(f"cannot read mesh {args.mesh}: {exc}") from exc
    dofmap = DofMap.build(mesh, element, geometry.Gluing.NONE)
    fields = dict(_read_field(s) for s in args.field)
    n_nodes = len(dofmap.node_coords)
    for name, values in fields.items():
        if len(values) != n_nodes:
            raise ConfigError(f"field {name}: {len(values)} rows, the {element.name} mesh has {n_nodes} nodes")
    out = Path(args.outputs)
    out.mkdir(parents=True, exist_ok=True)
    path = out / args.name
    write_vtk(path, mesh, dofmap, fields, title=f"{args.mesh.name} {element.name}")
    print(f"wrote {path}")
    return path


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "export":
            cmd_export(args)
            return EXIT_OK
        cfg = config_from_args(args)
        if args.command == "solve":
            cmd_solve(cfg)
        else:
            cmd_convergence(cfg)
    except ConfigError as exc:
        _report_failure("config", str(exc))
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        _report_failure(error_category(exc), str(exc))
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
