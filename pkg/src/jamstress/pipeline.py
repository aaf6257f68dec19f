"""Run configuration and the mesh -> LP -> forces -> stress pipeline."""

from __future__ import annotations

import csv
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import geometry
from .export import export_forces_csv, export_mechanism_csv, export_vtk, write_report
from .friction_duals import (
    InterfaceForces,
    check_cell_balance,
    check_contact_kkt,
    check_tresca,
    dual_residual_by_cell,
    extract_forces,
    warn_if_unbalanced,
)
from .lp_core import Jammed, LpSolution, Mechanism, SolverError, classify_stability, solve_lp
from .primal import FrictionProblem, assemble_lp, tractions_from_matrix, tractions_per_side
from .reconstruct import Reconstruction, reconstruct_all

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_AUDIT, EXIT_MECHANISM, EXIT_SOLVER = 0, 1, 2, 3

PRESETS = ("verif1", "verif2", "shear-brick", "compress60", "twocell", "twocell-tension")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Parsed run configuration.

    ``mesh`` is either ``{"path": ...}`` or a generator description
    ``{"kind": "grid"|"voronoi"|"brick", ...}``; ``traction`` holds
    ``mode`` ("matrix", "per-side" or "per-edge") and its parameters.
    """

    mesh: dict
    traction: dict
    s_T: float = 10.0
    tol: float = 1e-8
    max_iter: int = 200
    audit_tol: float = 1e-7
    output_dir: Path | None = None
    threads: int = 1
    name: str = "run"
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, data: dict, base_dir=None, name: str = "run") -> "RunConfig":
        data = dict(data)
        mesh = dict(data.pop("mesh", {}))
        traction = dict(data.pop("traction", {}))
        material = data.pop("material", {})
        solver = data.pop("solver", {})
        output = data.pop("output", {})
        name = data.pop("name", name)
        if data:
            raise ConfigError(f"unknown config sections {sorted(data)}")
        if ("path" in mesh) == ("kind" in mesh):
            raise ConfigError("mesh needs exactly one of 'path' or 'kind'")
        if traction.get("mode") not in ("matrix", "per-side", "per-edge"):
            raise ConfigError(f"traction.mode must be matrix, per-side or per-edge, got {traction.get('mode')!r}")
        out_dir = output.get("dir")
        return cls(
            mesh=mesh,
            traction=traction,
            s_T=float(material.get("s_T", 10.0)),
            tol=float(solver.get("tol", 1e-8)),
            max_iter=int(solver.get("max_iter", 200)),
            audit_tol=float(solver.get("audit_tol", 1e-7)),
            output_dir=Path(out_dir) if out_dir is not None else None,
            threads=int(output.get("threads", 1)),
            name=name,
            base_dir=Path(base_dir) if base_dir is not None else Path.cwd(),
        )

    @classmethod
    def from_toml(cls, path) -> "RunConfig":
        path = Path(path)
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        return cls.from_dict(data, base_dir=path.parent, name=path.stem)

    @classmethod
    def preset(cls, name: str) -> "RunConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
        text = resources.files("jamstress.presets").joinpath(f"{name}.toml").read_text()
        return cls.from_dict(tomllib.loads(text), name=name)

    @property
    def worker_count(self) -> int:
        env = os.environ.get("JAMSTRESS_THREADS")
        if env:
            return max(1, int(env))
        return max(1, self.threads)


def build_mesh_from_spec(spec: dict, base_dir=None) -> geometry.PolygonalMesh:
    if "path" in spec:
        path = Path(spec["path"])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        return geometry.load_mesh(path.read_text())
    kind = spec["kind"]
    domain = tuple(spec.get("domain", (0.0, 0.0, 1.0, 1.0)))
    if kind == "grid":
        return geometry.generate_grid(int(spec.get("nx", 1)), int(spec.get("ny", 1)), domain)
    if kind == "brick":
        return geometry.generate_brick_wall(int(spec.get("rows", 1)), int(spec.get("cols", 1)), domain)
    if kind == "voronoi":
        x0, y0, x1, y1 = domain
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        seeds = rng.uniform((x0, y0), (x1, y1), size=(int(spec.get("n_seeds", 1)), 2))
        return geometry.generate_voronoi(seeds, geometry._rectangle(domain))
    raise ConfigError(f"unknown mesh kind {kind!r}")


def build_tractions(spec: dict, mesh: geometry.PolygonalMesh, base_dir=None) -> dict:
    mode = spec["mode"]
    if mode == "matrix":
        return tractions_from_matrix(mesh, spec["S"])
    if mode == "per-side":
        sides = {k: spec[k] for k in ("left", "right", "top", "bottom") if k in spec}
        return tractions_per_side(mesh, sides, spec.get("default", (0.0, 0.0)))
    table = {}
    if "file" in spec:
        path = Path(spec["file"])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                table[int(row["edge_id"])] = (float(row["gx"]), float(row["gy"]))
    for eid, gx, gy in spec.get("table", []):
        table[int(eid)] = (float(gx), float(gy))
    if "default" in spec:
        for eid in mesh.boundary_edges:
            table.setdefault(eid, tuple(spec["default"]))
    return {k: np.asarray(v, dtype=float) for k, v in table.items()}


@dataclass
class RunResult:
    """Everything a run produced; ``report`` is what goes to report.json."""

    report: dict
    exit_code: int
    mesh: geometry.PolygonalMesh | None = None
    problem: FrictionProblem | None = None
    solution: LpSolution | None = None
    stability: Jammed | Mechanism | None = None
    forces: InterfaceForces | None = None
    reconstruction: Reconstruction | None = None


def audit(
    problem: FrictionProblem, lp, sol: LpSolution, forces: InterfaceForces, recon: Reconstruction | None, tol: float,
    u: np.ndarray | None = None,
) -> dict:
    """Recompute every audit of a jammed run; ``passed`` covers the gated ones.

    ``u`` defaults to the zero displacement of a jammed packing.  The
    solver iterate enters through the LP residuals and complementarity.
    """
    mesh = problem.mesh
    lengths = [mesh.edges[e].length for e in mesh.internal_edges]
    scale = max(1.0, problem.s_T * max(lengths, default=0.0))
    iterate_u = sol.x[: 2 * mesh.n_cells].reshape(-1, 2)
    if u is None:
        u = np.zeros_like(iterate_u)
    balance = check_cell_balance(forces, problem)
    contact = check_contact_kkt(u, forces, mesh, tol * scale)
    tresca = check_tresca(u, forces, problem.s_T, mesh, tol * scale)
    du, dv = dual_residual_by_cell(sol, lp, mesh.n_cells)
    max_balance = float(np.abs(balance).max(initial=0.0))
    checks = {
        "cell_balance": max_balance,
        "tresca_excess": tresca.max_excess,
        "tresca_misalignment": tresca.max_misalignment,
        "penetration": contact.max_penetration,
        "tension": contact.max_tension,
        "complementarity": contact.max_complementarity,
        "lp_complementarity": sol.complementarity,
        "lp_primal_residual": sol.primal_residual,
        "lp_dual_residual": sol.dual_residual,
        "duality_gap": sol.gap,
        "dual_physical_mismatch": abs(float(np.abs(du).max(initial=0.0)) - max_balance),
    }
    gated = {k: v <= tol * scale for k, v in checks.items()}
    info = {
        "max_displacement": float(np.abs(u).max(initial=0.0)),
        "iterate_max_displacement": float(np.abs(iterate_u).max(initial=0.0)),
        "force_scale": scale,
        "equality_multiplier": forces.y.tolist(),
        "slack_dual_residual": float(np.abs(dv).max(initial=0.0)),
    }
    if recon is not None:
        sym_ratio = 0.0
        pointwise = 0.0
        for f in recon.fields.values():
            sig = f.barycenter_values()
            norm = 1.0 + np.abs(sig).max()
            areas = np.array([el.area for el in f.elements])
            sym_ratio = max(sym_ratio, float((np.abs(f.weak_symmetry()) / (norm * areas)).max()))
            for t, el in enumerate(f.elements):
                for pt in el.points:
                    s = f.value(t, pt)
                    pointwise = max(pointwise, abs(s[0, 1] - s[1, 0]))
        checks["weak_symmetry"] = sym_ratio
        gated["weak_symmetry"] = sym_ratio <= 1e-9
        checks["boundary_flux_mismatch"] = recon.max_flux_mismatch
        gated["boundary_flux_mismatch"] = recon.max_flux_mismatch <= 1e-12 * scale * max(1.0, mesh.diameter)
        checks["reconstruction_failures"] = len(recon.failures)
        gated["reconstruction_failures"] = not recon.failures
        info["max_div_norm"] = recon.max_div_norm
        info["max_pointwise_asymmetry"] = pointwise
        info["flagged_cells"] = recon.flagged
    return {"values": checks, "passed": gated, "info": info, "ok": all(gated.values())}


def run_pipeline(config: RunConfig, write: bool = True) -> RunResult:
    timings = {}
    report = {"name": config.name, "s_T": config.s_T}

    t0 = time.perf_counter()
    mesh = build_mesh_from_spec(config.mesh, config.base_dir)
    problem = FrictionProblem(mesh, config.s_T, build_tractions(config.traction, mesh, config.base_dir))
    timings["mesh"] = time.perf_counter() - t0
    report["mesh"] = {
        "cells": mesh.n_cells,
        "edges": len(mesh.edges),
        "internal_edges": len(mesh.internal_edges),
        "diameter": mesh.diameter,
    }
    report["load"] = {"resultant": problem.resultant.tolist(), "balanced": problem.balanced}

    t0 = time.perf_counter()
    lp = assemble_lp(problem)
    sol = solve_lp(lp, tol=config.tol, max_iter=config.max_iter)
    timings["lp"] = time.perf_counter() - t0
    report["lp"] = {
        "status": sol.status.value,
        "iterations": sol.iterations,
        "primal_objective": sol.primal_objective,
        "dual_objective": sol.dual_objective,
        "gap": sol.gap,
        "variables": lp.n_vars,
        "inequalities": len(lp.h),
    }
    out = _prepare_output(config) if write else None
    result = RunResult(report, EXIT_SOLVER, mesh, problem, sol)

    try:
        stability = classify_stability(sol, lp)
    except SolverError as exc:
        report["stability"] = "failure"
        report["error"] = str(exc)
        report["exit_code"] = EXIT_SOLVER
        report["timings"] = timings
        if out:
            write_report(report, out / "report.json")
        return result
    result.stability = stability

    if isinstance(stability, Mechanism):
        report["stability"] = "mechanism"
        report["mechanism"] = stability.u.tolist()
        report["timings"] = timings
        result.exit_code = EXIT_MECHANISM
        report["exit_code"] = EXIT_MECHANISM
        if out:
            export_mechanism_csv(stability.u, out / "mechanism.csv")
            write_report(report, out / "report.json")
        return result

    report["stability"] = "jammed"
    t0 = time.perf_counter()
    forces = extract_forces(sol, lp, mesh)
    warn_if_unbalanced(forces, problem)
    timings["forces"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    recon = reconstruct_all(mesh, forces, problem, workers=config.worker_count)
    timings["reconstruction"] = time.perf_counter() - t0
    result.forces, result.reconstruction = forces, recon

    audits = audit(problem, lp, sol, forces, recon, config.audit_tol, stability.u)
    report["audits"] = audits
    report["cells"] = {
        str(cid): {"method": f.method, "condition": f.condition, "div_norm": f.div_norm()}
        for cid, f in recon.fields.items()
    }
    report["failures"] = {str(k): v for k, v in recon.failures.items()}
    report["timings"] = timings
    result.exit_code = EXIT_OK if audits["ok"] else EXIT_AUDIT
    report["exit_code"] = result.exit_code
    if out:
        export_forces_csv(forces, mesh, out / "forces.csv")
        export_vtk(recon.fields, mesh, out / "stress.vtk")
        write_report(report, out / "report.json")
    return result


def _prepare_output(config: RunConfig) -> Path | None:
    if config.output_dir is None:
        return None
    out = config.output_dir
    if not out.is_absolute():
        out = config.base_dir / out
    out.mkdir(parents=True, exist_ok=True)
    return out
