"""Equilibrated stress reconstruction with lowest-order Raviart-Thomas fields.

Each cell is fanned into triangles around its center.  Both rows of the
stress tensor live in RT0 on that fan; the boundary fluxes are fixed by
the interface tractions and the applied loads, the spoke fluxes minimise
``||div sigma||^2`` subject to ``int_T (sigma_12 - sigma_21) = 0`` on every
triangle ``T``.

Local numbering on a fan with ``n`` triangles: point 0 is the apex and
points ``1..n`` the ring.  Edge ``k < n`` is the spoke ``(0, k + 1)``,
edge ``n + t`` the boundary side of triangle ``t``.  Every edge is
oriented from its lower to its higher local point id and a flux dof is
``int_e sigma_row . n`` with ``n`` the right-hand normal of that
orientation.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .friction_duals import InterfaceForces, cell_tractions
from .geometry import CellTriangulation, MeshError, PolygonalMesh, fan_triangulate
from .primal import FrictionProblem

logger = logging.getLogger(__name__)

__all__ = [
    "Rt0Triangle",
    "rt0_local",
    "SaddleSystem",
    "CellStressField",
    "assemble_cell_system",
    "solve_cell",
    "sample_stress",
    "reconstruct_all",
    "Reconstruction",
    "cell_boundary_tractions",
]


@dataclass(frozen=True, eq=False)
class Rt0Triangle:
    """RT0 shape data of one triangle.

    Local edge ``i`` is opposite vertex ``i``.  The basis function of edge
    ``i`` has unit mean normal component along ``signs[i] * outward``::

        phi_i(x) = signs[i] * |e_i| / (2 |T|) * (x - P_i)
    """

    points: np.ndarray
    area: float
    barycenter: np.ndarray
    lengths: np.ndarray
    normals: np.ndarray
    signs: np.ndarray
    div: np.ndarray
    integral: np.ndarray

    def evaluate(self, coeffs, x) -> np.ndarray:
        """Field with mean normal components ``coeffs`` at point ``x``."""
        scale = self.signs * self.lengths / (2.0 * self.area) * np.asarray(coeffs, dtype=float)
        return (scale[:, None] * (np.asarray(x, dtype=float) - self.points)).sum(axis=0)


def rt0_local(points, signs=(1.0, 1.0, 1.0)) -> Rt0Triangle:
    points = np.asarray(points, dtype=float)
    signs = np.asarray(signs, dtype=float)
    d1, d2 = points[1] - points[0], points[2] - points[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    diam = max(np.hypot(*d1), np.hypot(*d2), np.hypot(*(points[2] - points[1])))
    if area <= 1e-14 * diam**2:
        raise MeshError("degenerate triangle")
    bary = points.mean(axis=0)
    lengths = np.empty(3)
    normals = np.empty((3, 2))
    for i in range(3):
        a, b = points[(i + 1) % 3], points[(i + 2) % 3]
        d = b - a
        lengths[i] = np.hypot(*d)
        nrm = np.array([d[1], -d[0]]) / lengths[i]
        if nrm @ (a - points[i]) < 0:
            nrm = -nrm
        normals[i] = nrm
    div = signs * lengths / area
    integral = (signs * lengths / 2.0)[:, None] * (bary - points)
    return Rt0Triangle(points, area, bary, lengths, normals, signs, div, integral)


def _fan_edges(n: int):
    """Per triangle: (edge ids, orientation signs) for local edges opposite (apex, a, b)."""
    out = []
    for t in range(n):
        a, b = t + 1, (t + 1) % n + 1
        ids = (n + t, b - 1, a - 1)
        # spoke (0, a) is traversed 0 -> a, spoke (0, b) as b -> 0, the side as a -> b
        signs = (1.0 if a < b else -1.0, -1.0, 1.0)
        out.append((ids, signs))
    return out


@dataclass(eq=False)
class SaddleSystem:
    """Dense KKT system ``[[A, B'], [B, 0]] [free fluxes; p] = rhs``.

    Unknown order: spoke fluxes of row 1, spoke fluxes of row 2, then one
    multiplier per triangle.  ``fixed`` holds the boundary fluxes
    ``(2, n)`` and ``D`` / ``W`` the full divergence and weak-symmetry
    operators acting on all ``4 n`` fluxes ``[row1 (2n), row2 (2n)]``.
    """

    cell_id: int
    triangulation: CellTriangulation
    matrix: np.ndarray
    rhs: np.ndarray
    fixed: np.ndarray
    D: np.ndarray
    W: np.ndarray
    elements: list[Rt0Triangle]
    free: np.ndarray
    bound: np.ndarray
    compatibility: np.ndarray

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def n_multipliers(self) -> int:
        return self.triangulation.n_triangles


def cell_boundary_tractions(cell_id: int, mesh: PolygonalMesh, tractions: dict, problem: FrictionProblem) -> np.ndarray:
    """Traction on each ring side of the cell (``(n, 2)``, ring order)."""
    out = []
    for eid in mesh.cell_edges[cell_id]:
        e = mesh.edges[eid]
        if e.is_boundary:
            out.append(problem.traction(eid))
        else:
            out.append(tractions[eid, cell_id])
    return np.array(out)


def assemble_cell_system(cell, tri: CellTriangulation, boundary_tractions) -> SaddleSystem:
    """Assemble the local mixed problem of one cell.

    ``boundary_tractions[t]`` is the traction (force per length) on the
    ring side owned by triangle ``t``.  All integrands are constant or
    affine per triangle, so the assembly is exact.
    """
    n = tri.n_triangles
    bt = np.asarray(boundary_tractions, dtype=float)
    if bt.shape != (n, 2):
        raise ValueError(f"cell {tri.cell_id}: expected {n} boundary tractions, got shape {bt.shape}")
    ne = 2 * n
    D = np.zeros((2 * n, 2 * ne))  # div of row r on triangle t is D[r * n + t] @ F
    W = np.zeros((n, 2 * ne))
    fixed = np.zeros((2, n))
    elements = []
    for t, (ids, signs) in enumerate(_fan_edges(n)):
        pts = tri.points[tri.triangles[t]]
        el = rt0_local(pts, signs)
        elements.append(el)
        for i, eid in enumerate(ids):
            # flux-normalised basis: divide the mean-normal basis by the edge length
            div = el.div[i] / el.lengths[i]
            integ = el.integral[i] / el.lengths[i]
            D[t, eid] = div
            D[n + t, ne + eid] = div
            W[t, eid] += integ[1]
            W[t, ne + eid] -= integ[0]
        side = el.lengths[0]
        # outward side normal = signs[0] * oriented normal, flux = sign * |e| * (sigma n_out)_r
        fixed[:, t] = signs[0] * side * bt[t]

    free = np.concatenate([np.arange(n), ne + np.arange(n)])
    bound = np.concatenate([n + np.arange(n), ne + n + np.arange(n)])
    Fb = fixed.ravel()
    areas = np.array([el.area for el in elements])
    M = D.T @ (np.concatenate([areas, areas])[:, None] * D)
    A_ff = M[np.ix_(free, free)]
    A_fb = M[np.ix_(free, bound)]
    B_f = W[:, free]
    B_b = W[:, bound]
    K = np.block([[A_ff, B_f.T], [B_f, np.zeros((n, n))]])
    rhs = np.concatenate([-A_fb @ Fb, -B_b @ Fb])

    # net outward boundary force per row; nonzero means div sigma cannot vanish
    compat = fixed @ _outward_signs(n)
    return SaddleSystem(tri.cell_id, tri, K, rhs, fixed, D, W, elements, free, bound, compat)


def _outward_signs(n: int) -> np.ndarray:
    return np.array([1.0 if t + 1 < (t + 1) % n + 1 else -1.0 for t in range(n)])


@dataclass(eq=False)
class CellStressField:
    """Reconstructed stress in one cell.

    ``flux[r]`` holds the ``2 n`` flux dofs of tensor row ``r`` (spokes
    first, then ring sides) and ``p`` the skew multiplier per triangle.
    """

    cell_id: int
    triangulation: CellTriangulation
    flux: np.ndarray
    p: np.ndarray
    elements: list[Rt0Triangle]
    residual: float = 0.0
    condition: float = 1.0
    method: str = "direct"
    flagged: bool = False
    _angles: np.ndarray = field(default=None, repr=False)

    @property
    def n_triangles(self) -> int:
        return self.triangulation.n_triangles

    def _coeffs(self, t: int) -> np.ndarray:
        """Mean-normal coefficients of the two rows on triangle ``t`` (``(2, 3)``)."""
        n = self.n_triangles
        ids, _ = _fan_edges(n)[t]
        el = self.elements[t]
        return self.flux[:, list(ids)] / el.lengths

    def value(self, t: int, x) -> np.ndarray:
        c = self._coeffs(t)
        el = self.elements[t]
        return np.array([el.evaluate(c[0], x), el.evaluate(c[1], x)])

    def barycenter_values(self) -> np.ndarray:
        """``(n, 2, 2)`` tensor at each triangle barycenter (equals the triangle mean)."""
        return np.array([self.value(t, el.barycenter) for t, el in enumerate(self.elements)])

    def divergence(self) -> np.ndarray:
        """``(n, 2)`` constant divergence of each row per triangle."""
        out = np.empty((self.n_triangles, 2))
        for t, (ids, signs) in enumerate(_fan_edges(self.n_triangles)):
            out[t] = self.flux[:, list(ids)] @ np.asarray(signs) / self.elements[t].area
        return out

    def div_norm(self) -> float:
        areas = np.array([el.area for el in self.elements])
        return float(np.sqrt((areas[:, None] * self.divergence() ** 2).sum()))

    def weak_symmetry(self) -> np.ndarray:
        """``int_T (sigma_12 - sigma_21)`` per triangle."""
        out = np.empty(self.n_triangles)
        for t, el in enumerate(self.elements):
            c = self._coeffs(t)
            m1 = (c[0][:, None] * el.integral).sum(axis=0)
            m2 = (c[1][:, None] * el.integral).sum(axis=0)
            out[t] = m1[1] - m2[0]
        return out

    def boundary_forces(self) -> np.ndarray:
        """``int_e sigma n_c`` on each ring side, integrated from the field (``(n, 2)``)."""
        n = self.n_triangles
        out = np.empty((n, 2))
        for t, el in enumerate(self.elements):
            a, b = el.points[1], el.points[2]
            mid = 0.5 * (a + b)
            normal = el.normals[0]
            # sigma is affine, so the midpoint rule is exact on the side
            out[t] = self.value(t, mid) @ normal * el.lengths[0]
        return out


def solve_cell(sys: SaddleSystem) -> CellStressField:
    """Direct symmetric-indefinite solve, with a least-squares fallback."""
    K, rhs = sys.matrix, sys.rhs
    n = sys.n_multipliers
    rhs_norm = np.abs(rhs).max(initial=0.0)
    cond = float(np.linalg.cond(K))
    method, flagged = "direct", False
    sol = None
    if np.isfinite(cond) and cond < 1e14:
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            try:
                sol = sla.solve(K, rhs, assume_a="sym")
            except (sla.LinAlgError, sla.LinAlgWarning):
                sol = None
    if sol is None or np.abs(K @ sol - rhs).max(initial=0.0) > 1e-10 * rhs_norm:
        logger.warning("cell %d: singular saddle system (cond %.3g), using least squares", sys.cell_id, cond)
        sol = sla.lstsq(K, rhs)[0]
        method, flagged = "lstsq", True
    residual = float(np.abs(K @ sol - rhs).max(initial=0.0))
    if not np.all(np.isfinite(sol)):
        raise FloatingPointError(f"cell {sys.cell_id}: non-finite solution (cond {cond:.3g})")

    ne = 2 * n
    flux = np.zeros((2, ne))
    flux[0, :n] = sol[:n]
    flux[1, :n] = sol[n : 2 * n]
    flux[:, n:] = sys.fixed
    return CellStressField(
        sys.cell_id,
        sys.triangulation,
        flux,
        sol[2 * n :].copy(),
        sys.elements,
        residual=residual,
        condition=cond,
        method=method,
        flagged=flagged,
    )


def sample_stress(field: CellStressField, point) -> np.ndarray:
    """Stress tensor (rows are the RT0 rows) at a point inside the cell."""
    x = np.asarray(point, dtype=float)
    tri = field.triangulation
    apex = tri.points[0]
    if field._angles is None:
        ang = np.arctan2(*(tri.points[1:] - apex)[:, ::-1].T)
        field._angles = np.unwrap(ang)
    ang = field._angles
    theta = math.atan2(x[1] - apex[1], x[0] - apex[0])
    # bring theta into [ang[0], ang[0] + 2 pi)
    theta = ang[0] + (theta - ang[0]) % (2.0 * math.pi)
    t = int(np.searchsorted(ang, theta, side="right")) - 1
    t = min(max(t, 0), field.n_triangles - 1)
    pts = tri.points[tri.triangles[t]]
    lam = np.linalg.solve(np.vstack([pts.T, np.ones(3)]), np.append(x, 1.0))
    if lam.min() < -1e-10:
        raise ValueError(f"point {tuple(x)} lies outside cell {field.cell_id}")
    return field.value(t, x)


@dataclass(eq=False)
class Reconstruction:
    fields: dict[int, CellStressField]
    max_div_norm: float
    max_weak_symmetry: float
    max_flux_mismatch: float
    flagged: list[int]
    failures: dict[int, str]

    @property
    def ok(self) -> bool:
        return not self.failures


def reconstruct_cell(cell_id: int, mesh: PolygonalMesh, tractions: dict, problem: FrictionProblem) -> CellStressField:
    cell = mesh.cells[cell_id]
    tri = fan_triangulate(cell, mesh)
    bt = cell_boundary_tractions(cell_id, mesh, tractions, problem)
    return solve_cell(assemble_cell_system(cell, tri, bt))


def reconstruct_all(mesh: PolygonalMesh, forces: InterfaceForces, problem: FrictionProblem, workers: int = 1) -> Reconstruction:
    """Reconstruct every cell independently; failures are collected, not raised."""
    from .friction_duals import check_cell_balance

    resid = np.abs(check_cell_balance(forces, problem)).max(initial=0.0)
    if resid > 1e-6:
        logger.warning("interface forces are out of balance by %.3g; reconstruction will not be divergence free", resid)
    tractions = cell_tractions(forces, mesh)

    def work(cid):
        try:
            return cid, reconstruct_cell(cid, mesh, tractions, problem), None
        except (MeshError, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            return cid, None, str(exc)

    ids = range(mesh.n_cells)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, ids))
    else:
        results = [work(cid) for cid in ids]

    fields, failures = {}, {}
    for cid, fld, err in results:
        if err is None:
            fields[cid] = fld
        else:
            failures[cid] = err
    max_div = max((f.div_norm() for f in fields.values()), default=0.0)
    max_sym = max((np.abs(f.weak_symmetry()).max() for f in fields.values()), default=0.0)
    mismatch = 0.0
    for cid, f in fields.items():
        expected = mesh_side_lengths(mesh, cid)[:, None] * cell_boundary_tractions(cid, mesh, tractions, problem)
        mismatch = max(mismatch, float(np.abs(f.boundary_forces() - expected).max()))
    flagged = sorted(cid for cid, f in fields.items() if f.flagged)
    return Reconstruction(fields, max_div, float(max_sym), mismatch, flagged, failures)


def mesh_side_lengths(mesh: PolygonalMesh, cell_id: int) -> np.ndarray:
    return np.array([mesh.edges[e].length for e in mesh.cell_edges[cell_id]])
