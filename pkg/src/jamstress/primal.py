"""Friction problem: energies and linear-program assembly.

Unknowns are the rigid translations ``u_c`` of the cells plus one slack
``v_e`` per interface bounding the tangential slip ``|[u]_e . t_e|``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .geometry import Edge, PolygonalMesh
from .lp_core import LpStandardForm

logger = logging.getLogger(__name__)

__all__ = [
    "FrictionProblem",
    "LpStandardForm",
    "jump",
    "external_work",
    "primal_energy",
    "assemble_lp",
    "tractions_from_matrix",
    "tractions_per_side",
    "NONPEN",
    "SLACK_PLUS",
    "SLACK_MINUS",
]

NONPEN = "nonpen"
SLACK_PLUS = "slack+"
SLACK_MINUS = "slack-"
ROW_KINDS = (NONPEN, SLACK_PLUS, SLACK_MINUS)


@dataclass(eq=False)
class FrictionProblem:
    """Mesh, Tresca coefficient ``s_T`` and mean traction per boundary edge."""

    mesh: PolygonalMesh
    s_T: float
    tractions: dict[int, np.ndarray]
    resultant: np.ndarray = field(init=False)
    balanced: bool = field(init=False)

    def __post_init__(self):
        if not self.s_T > 0:
            raise ValueError(f"Tresca coefficient must be positive, got {self.s_T}")
        self.tractions = {int(k): np.asarray(v, dtype=float) for k, v in self.tractions.items()}
        missing = [e for e in self.mesh.boundary_edges if e not in self.tractions]
        if missing:
            raise ValueError(f"no traction given for boundary edges {missing[:5]}")
        extra = [e for e in self.tractions if e not in set(self.mesh.boundary_edges)]
        if extra:
            raise ValueError(f"tractions given for non-boundary edges {extra[:5]}")
        edges = self.mesh.edges
        forces = [edges[e].length * self.tractions[e] for e in self.mesh.boundary_edges]
        self.resultant = np.sum(forces, axis=0) if forces else np.zeros(2)
        total = sum(np.hypot(*f) for f in forces)
        self.balanced = bool(np.hypot(*self.resultant) <= 1e-9 * total) or total == 0.0
        if not self.balanced:
            logger.warning("boundary tractions are unbalanced: resultant %s", self.resultant)

    def traction(self, edge_id: int) -> np.ndarray:
        return self.tractions[edge_id]

    def boundary_load(self) -> np.ndarray:
        """Per-cell resultant ``sum |e| g_e`` over the cell's boundary edges."""
        load = np.zeros((self.mesh.n_cells, 2))
        for eid in self.mesh.boundary_edges:
            e = self.mesh.edges[eid]
            load[e.cell] += e.length * self.tractions[eid]
        return load


def tractions_from_matrix(mesh: PolygonalMesh, S) -> dict[int, np.ndarray]:
    """``g_e = S n_e`` on every boundary edge."""
    S = np.asarray(S, dtype=float).reshape(2, 2)
    return {eid: S @ mesh.edges[eid].normal for eid in mesh.boundary_edges}


def tractions_per_side(mesh: PolygonalMesh, sides: dict, default=(0.0, 0.0)) -> dict[int, np.ndarray]:
    """Constant tractions keyed by outward normal direction.

    ``sides`` maps a direction (``"left"``, ``"right"``, ``"bottom"``,
    ``"top"`` or an explicit 2-vector) to a traction vector; an edge takes
    the entry whose direction matches its outward normal.
    """
    named = {"right": (1.0, 0.0), "left": (-1.0, 0.0), "top": (0.0, 1.0), "bottom": (0.0, -1.0)}
    table = []
    for key, g in sides.items():
        d = np.asarray(named.get(key, key), dtype=float)
        table.append((d / np.hypot(*d), np.asarray(g, dtype=float)))
    out = {}
    for eid in mesh.boundary_edges:
        n = mesh.edges[eid].normal
        out[eid] = np.asarray(default, dtype=float)
        for d, g in table:
            if n @ d > 1.0 - 1e-9:
                out[eid] = g
                break
    return out


def jump(u: np.ndarray, e: Edge) -> np.ndarray:
    """``[u]_e = u_{c+} - u_{c-}``."""
    if e.is_boundary:
        raise ValueError(f"jump is undefined on boundary edge {e.id}")
    u = np.asarray(u, dtype=float)
    return u[e.c_plus] - u[e.c_minus]


def external_work(u: np.ndarray, problem: FrictionProblem) -> float:
    """Work of the boundary tractions, each edge moving with its cell."""
    u = np.asarray(u, dtype=float)
    return float(np.sum(problem.boundary_load() * u))


def primal_energy(u: np.ndarray, problem: FrictionProblem) -> float:
    """Tresca dissipation over the interfaces minus the external work."""
    mesh = problem.mesh
    friction = 0.0
    for eid in mesh.internal_edges:
        e = mesh.edges[eid]
        friction += problem.s_T * e.length * abs(jump(u, e) @ e.tangent)
    return friction - external_work(u, problem)


def assemble_lp(problem: FrictionProblem) -> LpStandardForm:
    """Build the friction linear program.

    Variables are ordered ``u_0x, u_0y, u_1x, ..., v_e...`` (interfaces in
    mesh order).  Each interface contributes three rows, in order::

        nonpen:  -[u].n - 0   <= 0
        slack+:   [u].t - v   <= 0
        slack-:  -[u].t - v   <= 0

    and the two equality rows fix the mean translation, ``sum_c u_c = 0``.
    """
    mesh = problem.mesh
    nc = mesh.n_cells
    internal = mesh.internal_edges
    ni = len(internal)
    n = 2 * nc + ni

    var_layout = [("u", c, k) for c in range(nc) for k in range(2)]
    var_layout += [("v", eid) for eid in internal]

    c = np.zeros(n)
    c[: 2 * nc] = -problem.boundary_load().ravel()

    rows, cols, vals = [], [], []
    row_layout = []
    for k, eid in enumerate(internal):
        e = mesh.edges[eid]
        c[2 * nc + k] = problem.s_T * e.length
        um, up = 2 * e.c_minus, 2 * e.c_plus
        for r, (kind, vec, vcoef) in enumerate(
            ((NONPEN, -e.normal, 0.0), (SLACK_PLUS, e.tangent, -1.0), (SLACK_MINUS, -e.tangent, -1.0))
        ):
            row = 3 * k + r
            row_layout.append((eid, kind))
            for comp in range(2):
                rows += [row, row]
                cols += [up + comp, um + comp]
                vals += [vec[comp], -vec[comp]]
            if vcoef:
                rows.append(row)
                cols.append(2 * nc + k)
                vals.append(vcoef)
    G = sps.csr_matrix((vals, (rows, cols)), shape=(3 * ni, n))
    G.eliminate_zeros()

    A = sps.lil_matrix((2, n))
    for cell in range(nc):
        A[0, 2 * cell] = 1.0
        A[1, 2 * cell + 1] = 1.0
    return LpStandardForm(
        c=c,
        G=G,
        h=np.zeros(3 * ni),
        A=A.tocsr(),
        b=np.zeros(2),
        var_layout=var_layout,
        row_layout=row_layout,
    )


def split_x(lp: LpStandardForm, x: np.ndarray, n_cells: int) -> tuple[np.ndarray, np.ndarray]:
    """Split an LP point into per-cell displacements and interface slacks."""
    x = np.asarray(x, dtype=float)
    return x[: 2 * n_cells].reshape(n_cells, 2), x[2 * n_cells :]


def pack_x(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(u, dtype=float).ravel(), np.asarray(v, dtype=float)])
