"""Writers for forces.csv, stress.vtk, mechanism.csv and report.json."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .friction_duals import InterfaceForces, edge_traction
from .geometry import PolygonalMesh
from .reconstruct import CellStressField

FORCES_HEADER = ["edge_id", "c_minus", "c_plus", "length", "nx", "ny", "fn", "ft", "lam_minus_x", "lam_minus_y"]


def _g(v: float) -> str:
    return format(float(v), ".17g")


def export_forces_csv(forces: InterfaceForces, mesh: PolygonalMesh, path) -> None:
    order = np.argsort(forces.edge_ids, kind="stable")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORCES_HEADER)
        for k in order:
            e = mesh.edges[int(forces.edge_ids[k])]
            lam = edge_traction((forces.fn[k], forces.ft[k]), e, e.c_minus)
            w.writerow(
                [e.id, e.c_minus, e.c_plus, _g(e.length), _g(e.normal[0]), _g(e.normal[1]),
                 _g(forces.fn[k]), _g(forces.ft[k]), _g(lam[0]), _g(lam[1])]
            )


def read_forces_csv(path, y=(0.0, 0.0)) -> InterfaceForces:
    """Inverse of :func:`export_forces_csv` (the equality multiplier is not stored)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return InterfaceForces(
        np.array([int(r["edge_id"]) for r in rows], dtype=int),
        np.array([float(r["fn"]) for r in rows]),
        np.array([float(r["ft"]) for r in rows]),
        np.asarray(y, dtype=float),
    )


def export_vtk(fields: dict[int, CellStressField], mesh: PolygonalMesh, path) -> None:
    """Legacy ASCII VTK unstructured grid of all fan triangles.

    Points are the mesh vertices followed by one apex per cell.  Cell data
    are the barycentric tensor components and the owning cell id, ordered
    by cell id then triangle index.
    """
    nv = len(mesh.vertices)
    points = np.vstack([mesh.vertices, mesh.centers])
    tris, values, owner = [], [], []
    for cid in sorted(fields):
        ring = mesh.cells[cid].vertex_ids
        n = len(ring)
        sig = fields[cid].barycenter_values()
        for t in range(n):
            tris.append((nv + cid, ring[t], ring[(t + 1) % n]))
            values.append(sig[t])
            owner.append(cid)
    lines = [
        "# vtk DataFile Version 3.0",
        "jamstress reconstructed stress",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(points)} double",
    ]
    lines += [f"{_g(x)} {_g(y)} 0" for x, y in points]
    lines.append(f"CELLS {len(tris)} {4 * len(tris)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tris]
    lines.append(f"CELL_TYPES {len(tris)}")
    lines += ["5"] * len(tris)
    lines.append(f"CELL_DATA {len(tris)}")
    values = np.array(values).reshape(-1, 2, 2)
    for name, (i, j) in (("sigma_11", (0, 0)), ("sigma_12", (0, 1)), ("sigma_21", (1, 0)), ("sigma_22", (1, 1))):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_g(v) for v in values[:, i, j]]
    lines += ["SCALARS cell_id int 1", "LOOKUP_TABLE default"]
    lines += [str(c) for c in owner]
    Path(path).write_text("\n".join(lines) + "\n")


def export_mechanism_csv(u: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", "ux", "uy"])
        for cid, (ux, uy) in enumerate(np.asarray(u, dtype=float)):
            w.writerow([cid, _g(ux), _g(uy)])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
