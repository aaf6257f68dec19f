"""Interface forces from LP duals, and audits of the contact conditions.

Sign map, fixed by the row conventions of :func:`jamstress.primal.assemble_lp`:

    f^n_e = -z_nonpen(e)
    f^t_e =  z_slack+(e) - z_slack-(e)

Stationarity of the Lagrangian in ``u_c`` then reads, for every cell,
``sum_int |e| lambda_{e,c} + sum_bnd |e| g_e - y = 0`` with ``y`` the
multiplier of ``sum_c u_c = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import Edge, PolygonalMesh
from .lp_core import LpSolution, LpStandardForm, Status, dual_objective
from .primal import (
    NONPEN,
    SLACK_MINUS,
    SLACK_PLUS,
    FrictionProblem,
    jump,
    primal_energy,
)

logger = logging.getLogger(__name__)

__all__ = [
    "InterfaceForces",
    "extract_forces",
    "edge_traction",
    "cell_tractions",
    "check_cell_balance",
    "check_contact_kkt",
    "check_tresca",
    "weak_duality_check",
    "forces_from_uniform_stress",
    "forces_to_duals",
    "ContactAudit",
    "TrescaAudit",
]


@dataclass(eq=False)
class InterfaceForces:
    """Normal and tangential force per interface (ordered as ``mesh.internal_edges``).

    ``y`` is the equality multiplier, a uniform body force per cell that is
    zero for balanced loads.
    """

    edge_ids: np.ndarray
    fn: np.ndarray
    ft: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self._index = {int(e): k for k, e in enumerate(self.edge_ids)}

    def of(self, edge_id: int) -> tuple[float, float]:
        k = self._index[edge_id]
        return float(self.fn[k]), float(self.ft[k])

    def copy(self) -> "InterfaceForces":
        return InterfaceForces(self.edge_ids.copy(), self.fn.copy(), self.ft.copy(), self.y.copy())


def extract_forces(sol: LpSolution, lp: LpStandardForm, mesh: PolygonalMesh) -> InterfaceForces:
    if sol.status is not Status.OPTIMAL:
        raise ValueError(f"forces need an optimal LP solution, got {sol.status.value}")
    rows = {key: k for k, key in enumerate(lp.row_layout)}
    edge_ids = np.array(mesh.internal_edges, dtype=int)
    fn = np.empty(len(edge_ids))
    ft = np.empty(len(edge_ids))
    try:
        for k, eid in enumerate(edge_ids):
            eid = int(eid)
            fn[k] = -sol.z[rows[eid, NONPEN]]
            ft[k] = sol.z[rows[eid, SLACK_PLUS]] - sol.z[rows[eid, SLACK_MINUS]]
    except KeyError as exc:
        raise ValueError(f"LP has no dual row for {exc.args[0]}") from None
    if len(sol.y) != 2:
        raise ValueError("LP must carry the two mean-translation rows")
    return InterfaceForces(edge_ids, fn, ft, np.array(sol.y, dtype=float))


def edge_traction(f_e, e: Edge, c: int) -> np.ndarray:
    """Traction ``lambda_{e,c}`` exerted on cell ``c`` across interface ``e``."""
    fn, ft = f_e
    return e.side(c) / e.length * (fn * e.normal + ft * e.tangent)


def cell_tractions(forces: InterfaceForces, mesh: PolygonalMesh) -> dict[tuple[int, int], np.ndarray]:
    """``(edge id, cell id) -> lambda``; the c_plus entry is the exact negation."""
    out = {}
    for k, eid in enumerate(forces.edge_ids):
        e = mesh.edges[int(eid)]
        lam = edge_traction((forces.fn[k], forces.ft[k]), e, e.c_minus)
        out[e.id, e.c_minus] = lam
        out[e.id, e.c_plus] = -lam
    return out


def check_cell_balance(forces: InterfaceForces, problem: FrictionProblem) -> np.ndarray:
    """Per-cell force residual ``sum |e| lambda + sum |e| g - y`` (shape ``(N, 2)``)."""
    mesh = problem.mesh
    r = problem.boundary_load() - forces.y
    for (eid, cid), lam in cell_tractions(forces, mesh).items():
        r[cid] += mesh.edges[eid].length * lam
    return r


def _force_scale(problem: FrictionProblem) -> float:
    mesh = problem.mesh
    lengths = [mesh.edges[e].length for e in mesh.internal_edges]
    return max(1.0, problem.s_T * max(lengths, default=0.0))


@dataclass
class ContactAudit:
    max_penetration: float
    max_tension: float
    max_complementarity: float
    tol: float

    @property
    def ok(self) -> bool:
        return (
            self.max_penetration <= self.tol
            and self.max_tension <= self.tol
            and self.max_complementarity <= self.tol
        )


@dataclass
class TrescaAudit:
    max_excess: float
    max_misalignment: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_excess <= self.tol and self.max_misalignment <= self.tol


def check_contact_kkt(u, forces: InterfaceForces, mesh: PolygonalMesh, tol: float = 1e-7) -> ContactAudit:
    """Non-penetration, compressive normal force and their complementarity.

    Violations are reported as positive numbers; zero means satisfied.
    """
    u = np.asarray(u, dtype=float)
    pen = ten = comp = 0.0
    for k, eid in enumerate(forces.edge_ids):
        e = mesh.edges[int(eid)]
        gap = float(jump(u, e) @ e.normal)
        pen = max(pen, -gap)
        ten = max(ten, float(forces.fn[k]))
        comp = max(comp, abs(forces.fn[k] * gap))
    return ContactAudit(pen, ten, comp, tol)


def check_tresca(u, forces: InterfaceForces, s_T: float, mesh: PolygonalMesh, tol: float = 1e-7) -> TrescaAudit:
    """Tresca bound ``|f^t| <= s_T |e|`` and friction opposing the slip."""
    u = np.asarray(u, dtype=float)
    excess = -np.inf
    misalign = 0.0
    for k, eid in enumerate(forces.edge_ids):
        e = mesh.edges[int(eid)]
        bound = s_T * e.length
        excess = max(excess, abs(forces.ft[k]) - bound)
        slip = float(jump(u, e) @ e.tangent)
        if abs(slip) > tol:
            misalign = max(misalign, forces.ft[k] * slip + bound * abs(slip))
    return TrescaAudit(float(max(excess, 0.0)) if np.isfinite(excess) else 0.0, float(misalign), tol)


def forces_to_duals(forces: InterfaceForces, problem: FrictionProblem, lp: LpStandardForm):
    """Inverse of the sign map; slack duals split so that ``z+ + z- = s_T |e|``."""
    mesh = problem.mesh
    z = np.zeros(len(lp.h))
    rows = {key: k for k, key in enumerate(lp.row_layout)}
    for k, eid in enumerate(forces.edge_ids):
        eid = int(eid)
        bound = problem.s_T * mesh.edges[eid].length
        z[rows[eid, NONPEN]] = -forces.fn[k]
        z[rows[eid, SLACK_PLUS]] = 0.5 * (bound + forces.ft[k])
        z[rows[eid, SLACK_MINUS]] = 0.5 * (bound - forces.ft[k])
    return z, forces.y.copy()


def weak_duality_check(u, forces: InterfaceForces, problem: FrictionProblem, lp: LpStandardForm, tol: float = 1e-9) -> float:
    """``E(u) - E*(f)`` for a feasible displacement ``u``.

    Raises ``ValueError`` if ``u`` violates non-penetration or the mean
    translation constraint.
    """
    u = np.asarray(u, dtype=float)
    mesh = problem.mesh
    scale = max(1.0, np.abs(u).max(initial=0.0))
    for eid in mesh.internal_edges:
        e = mesh.edges[eid]
        if jump(u, e) @ e.normal < -tol * scale:
            raise ValueError(f"u penetrates across edge {eid}")
    if np.abs(u.sum(axis=0)).max() > tol * scale * mesh.n_cells:
        raise ValueError("u violates sum_c u_c = 0")
    z, y = forces_to_duals(forces, problem, lp)
    return primal_energy(u, problem) - dual_objective(lp, z, y)


def forces_from_uniform_stress(S, problem: FrictionProblem) -> InterfaceForces:
    """Interface forces read off a constant stress ``S`` (``lambda_{e,c-} = S n_e``).

    ``y`` is chosen as the mean cell residual, which vanishes when the
    boundary tractions are ``g = S n``.
    """
    S = np.asarray(S, dtype=float).reshape(2, 2)
    mesh = problem.mesh
    edge_ids = np.array(mesh.internal_edges, dtype=int)
    fn = np.empty(len(edge_ids))
    ft = np.empty(len(edge_ids))
    for k, eid in enumerate(edge_ids):
        e = mesh.edges[int(eid)]
        t = S @ e.normal
        fn[k] = e.length * (e.normal @ t)
        ft[k] = e.length * (e.tangent @ t)
    forces = InterfaceForces(edge_ids, fn, ft, np.zeros(2))
    forces.y = check_cell_balance(forces, problem).mean(axis=0)
    return forces


def dual_residual_by_cell(sol: LpSolution, lp: LpStandardForm, n_cells: int) -> tuple[np.ndarray, np.ndarray]:
    """Split ``G'z + A'y + c`` into its per-cell (u) and per-interface (v) parts."""
    G, A = lp.dense()
    r = G.T @ sol.z + A.T @ sol.y + lp.c
    return r[: 2 * n_cells].reshape(n_cells, 2), r[2 * n_cells :]


def warn_if_unbalanced(forces: InterfaceForces, problem: FrictionProblem) -> bool:
    mesh = problem.mesh
    g = [np.hypot(*problem.tractions[e]) for e in mesh.boundary_edges]
    ref = np.mean(g) if g else 0.0
    if np.hypot(*forces.y) > 1e-6 * ref and ref > 0:
        logger.warning("equality multiplier y=%s: load is globally unbalanced", forces.y)
        return True
    return False
