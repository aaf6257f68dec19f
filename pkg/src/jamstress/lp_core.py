"""Primal-dual interior-point solver for small dense linear programs.

Problems are given in the inequality standard form

    minimize    c @ x
    subject to  G @ x <= h,   A @ x == b,

with free ``x``.  The dual is

    maximize    -h @ z - b @ y
    subject to  G.T @ z + A.T @ y + c == 0,   z >= 0.

The solver runs Mehrotra predictor-corrector steps on the homogeneous
self-dual embedding, so a single iteration sequence either converges to a
primal-dual optimal pair or to a certificate of infeasibility or
unboundedness.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

logger = logging.getLogger(__name__)

__all__ = [
    "LpStandardForm",
    "LpSolution",
    "Status",
    "Jammed",
    "Mechanism",
    "solve_lp",
    "dual_objective",
    "classify_stability",
    "SolverError",
]

# certification thresholds for rays and Farkas vectors
CERT_TOL = 1e-10
# once tol-optimal, keep iterating (at most MAX_POLISH steps) towards POLISH * tol
POLISH = 1e-3
MAX_POLISH = 3
# relative diagonal shift of the reduced KKT matrix and refinement sweeps
REG = 1e-13
REFINE = 2


class SolverError(RuntimeError):
    pass


class Status(enum.Enum):
    OPTIMAL = "optimal"
    UNBOUNDED = "unbounded"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(eq=False)
class LpStandardForm:
    """``min c.x  s.t.  G x <= h,  A x = b``.

    ``var_layout[i]`` describes variable ``i`` and ``row_layout[k]``
    inequality row ``k``; both are free-form tuples and may be empty for
    generic problems.
    """

    c: np.ndarray
    G: sps.csr_matrix | np.ndarray
    h: np.ndarray
    A: sps.csr_matrix | np.ndarray
    b: np.ndarray
    var_layout: list = field(default_factory=list)
    row_layout: list = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        n = len(self.c)
        if self.G.shape != (len(self.h), n):
            raise ValueError(f"G has shape {self.G.shape}, expected {(len(self.h), n)}")
        if self.A.shape != (len(self.b), n):
            raise ValueError(f"A has shape {self.A.shape}, expected {(len(self.b), n)}")

    @property
    def n_vars(self) -> int:
        return len(self.c)

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        G = self.G.toarray() if sps.issparse(self.G) else np.asarray(self.G, dtype=float)
        A = self.A.toarray() if sps.issparse(self.A) else np.asarray(self.A, dtype=float)
        return G, A


@dataclass(eq=False)
class LpSolution:
    status: Status
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    primal_objective: float = float("nan")
    dual_objective: float = float("nan")
    complementarity: float = float("nan")
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    iterations: int = 0
    # improving direction for UNBOUNDED, normalised to c.ray == -1
    ray: np.ndarray | None = None
    # Farkas vector (z, y) for INFEASIBLE, normalised to h.z + b.y == -1
    farkas: tuple[np.ndarray, np.ndarray] | None = None
    message: str = ""

    @property
    def gap(self) -> float:
        return abs(self.primal_objective - self.dual_objective)


def dual_objective(lp: LpStandardForm, z, y) -> float:
    """``-h.z - b.y``; a lower bound on every feasible primal objective."""
    z = np.asarray(z, dtype=float)
    if np.any(z < -1e-10):
        raise ValueError(f"inequality duals must be nonnegative (min {z.min():.3g})")
    return float(-lp.h @ z - lp.b @ np.asarray(y, dtype=float))


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def solve_lp(lp: LpStandardForm, tol: float = 1e-8, max_iter: int = 200) -> LpSolution:
    """Solve ``lp`` to relative accuracy ``tol``.

    Iterations start from ``x = 0, y = 0, s = z = 1, tau = kappa = 1`` and
    are fully deterministic.  Returns OPTIMAL with a primal-dual pair,
    UNBOUNDED with a certified improving ray, INFEASIBLE with a Farkas
    vector, or NUMERICAL_FAILURE with the last iterate.
    """
    if not 1e-12 <= tol <= 1e-4:
        raise ValueError(f"tol must lie in [1e-12, 1e-4], got {tol}")
    G, A = lp.dense()
    c, h, b = lp.c, lp.h, lp.b
    n, m, p = len(c), len(h), len(b)

    x, y = np.zeros(n), np.zeros(p)
    s, z = np.ones(m), np.ones(m)
    tau = kappa = 1.0
    c_norm = 1.0 + np.abs(c).max(initial=0.0)

    best = None
    accepted = None
    for it in range(max_iter + 1):
        rp = A @ x - b * tau
        rg = G @ x + s - h * tau
        rd = G.T @ z + A.T @ y + c * tau
        rk = kappa + c @ x + b @ y + h @ z
        mu = (s @ z + tau * kappa) / (m + 1)

        sol = _assess(G, A, c, h, b, x, y, z, tau, tol, c_norm)
        sol.iterations = it
        best = sol
        if sol.status is Status.OPTIMAL:
            # a few extra steps towards POLISH * tol; the last tol-optimal iterate is kept
            if accepted is None:
                accepted_at = it
            accepted = sol
            tight = _assess(G, A, c, h, b, x, y, z, tau, POLISH * tol, c_norm)
            if tight.status is Status.OPTIMAL or it - accepted_at >= MAX_POLISH:
                break
        elif sol.status is not Status.NUMERICAL_FAILURE:
            logger.debug("LP %s after %d iterations", sol.status.value, it)
            return sol
        if it == max_iter or not np.isfinite(mu):
            break

        # reduced KKT [[G' D^-1 G, A'], [A, 0]] with D = s / z, factorised with a
        # small quasi-definite shift and corrected by iterative refinement
        w = z / s
        K = np.zeros((n + p, n + p))
        K[:n, :n] = G.T @ (w[:, None] * G)
        K[:n, n:] = A.T
        K[n:, :n] = A
        delta = REG * max(1.0, np.abs(np.diag(K)).max(initial=0.0))
        Kreg = K.copy()
        Kreg[np.arange(n), np.arange(n)] += delta
        Kreg[np.arange(n, n + p), np.arange(n, n + p)] -= delta
        try:
            lu = sla.lu_factor(Kreg, check_finite=True)
        except (ValueError, sla.LinAlgError) as exc:
            best.message = f"KKT factorization failed: {exc}"
            break

        def solve3(r1, r2, r3):
            rhs = np.concatenate([r1 + G.T @ (w * r3), r2])
            sol_xy = sla.lu_solve(lu, rhs)
            for _ in range(REFINE):
                sol_xy = sol_xy + sla.lu_solve(lu, rhs - K @ sol_xy)
            dx, dy = sol_xy[:n], sol_xy[n:]
            dz = w * (G @ dx - r3)
            return dx, dy, dz

        qx, qy, qz = solve3(-c, b, h)
        q_gap = c @ qx + b @ qy + h @ qz

        def direction(eta, rs, rt):
            px, py, pz = solve3(-eta * rd, -eta * rp, -eta * rg - rs / z)
            denom = q_gap - kappa / tau
            dtau = (-eta * rk - rt / tau - (c @ px + b @ py + h @ pz)) / denom
            dx, dy, dz = px + dtau * qx, py + dtau * qy, pz + dtau * qz
            ds = (rs - s * dz) / z
            dkappa = (rt - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def step_length(dz, ds, dtau, dkappa):
            a = min(
                _max_step(s, ds),
                _max_step(z, dz),
                _max_step(np.array([tau]), np.array([dtau])),
                _max_step(np.array([kappa]), np.array([dkappa])),
            )
            return a

        # predictor
        aff = direction(1.0, -s * z, -tau * kappa)
        dx, dy, dz, ds, dtau, dkappa = aff
        a_aff = min(1.0, step_length(dz, ds, dtau, dkappa))
        mu_aff = ((s + a_aff * ds) @ (z + a_aff * dz) + (tau + a_aff * dtau) * (kappa + a_aff * dkappa)) / (m + 1)
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector
        rs = -s * z + sigma * mu - ds * dz
        rt = -tau * kappa + sigma * mu - dtau * dkappa
        dx, dy, dz, ds, dtau, dkappa = direction(1.0 - sigma, rs, rt)
        alpha = min(1.0, 0.99 * step_length(dz, ds, dtau, dkappa))
        if not np.isfinite(alpha) or alpha <= 0.0:
            best.message = "zero step length"
            break

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

        # keep the embedding normalised so certificates do not underflow
        scale = max(tau, kappa, np.abs(x).max(initial=0.0), 1.0)
        if scale > 1e8:
            x, y, z, s = x / scale, y / scale, z / scale, s / scale
            tau, kappa = tau / scale, kappa / scale

    if accepted is not None:
        logger.debug("LP optimal after %d iterations", accepted.iterations)
        return accepted
    if not best.message:
        best.message = f"no convergence after {max_iter} iterations"
    logger.warning("LP solver failed: %s", best.message)
    return best


def _assess(G, A, c, h, b, x, y, z, tau, tol, c_norm) -> LpSolution:
    """Classify the current embedding iterate."""
    xh, yh, zh = x / tau, y / tau, z / tau
    pobj = float(c @ xh)
    dobj = float(-h @ zh - b @ yh)
    pres = max(
        np.maximum(G @ xh - h, 0.0).max(initial=0.0),
        np.abs(A @ xh - b).max(initial=0.0),
    )
    dres = np.abs(G.T @ zh + A.T @ yh + c).max(initial=0.0)
    comp = float(np.abs(zh * (h - G @ xh)).max(initial=0.0))
    x_norm = 1.0 + np.abs(xh).max(initial=0.0)
    fields = dict(
        x=xh, z=zh, y=yh, primal_objective=pobj, dual_objective=dobj,
        complementarity=comp, primal_residual=float(pres), dual_residual=float(dres),
    )
    if (
        np.all(np.isfinite(xh))
        and pres <= tol * x_norm
        and dres <= tol * c_norm
        and abs(pobj - dobj) <= tol * (1.0 + abs(pobj))
    ):
        return LpSolution(Status.OPTIMAL, **fields)

    cx = float(c @ x)
    if cx < 0.0:
        ray = x / -cx
        if _certifies_ray(G, A, c, ray):
            return LpSolution(Status.UNBOUNDED, ray=ray, **fields)
    hz = float(h @ z + b @ y)
    if hz < 0.0:
        zf, yf = z / -hz, y / -hz
        if np.abs(G.T @ zf + A.T @ yf).max(initial=0.0) <= CERT_TOL:
            return LpSolution(Status.INFEASIBLE, farkas=(zf, yf), **fields)
    return LpSolution(Status.NUMERICAL_FAILURE, **fields)


def _certifies_ray(G, A, c, d) -> bool:
    return (
        np.max(G @ d, initial=-np.inf) <= CERT_TOL
        and np.abs(A @ d).max(initial=0.0) <= CERT_TOL
        and float(c @ d) <= -CERT_TOL
    )


# --------------------------------------------------------------------------
# stability


@dataclass(eq=False)
class Jammed:
    """Stable packing.

    ``u`` is the zero displacement, which attains the optimum whenever the
    objective is zero.  ``iterate_u`` is the solver's own optimal point; it
    can drift along zero-cost modes (cells free to separate without doing
    work) and is kept for diagnostics only.
    """

    objective: float
    u: np.ndarray
    iterate_u: np.ndarray


@dataclass(eq=False)
class Mechanism:
    """Collapse mode: per-cell displacement direction with max norm 1."""

    u: np.ndarray
    ray: np.ndarray


def _u_part(lp: LpStandardForm, x: np.ndarray) -> np.ndarray:
    idx = [i for i, v in enumerate(lp.var_layout) if v[0] == "u"]
    if not idx:
        return x.copy()
    n_cells = max(lp.var_layout[i][1] for i in idx) + 1
    u = np.zeros((n_cells, 2))
    for i in idx:
        _, cell, comp = lp.var_layout[i]
        u[cell, comp] = x[i]
    return u


def classify_stability(sol: LpSolution, lp: LpStandardForm, tol: float = 1e-7) -> Jammed | Mechanism:
    """Jammed if the optimum is (numerically) zero, Mechanism on an improving ray."""
    if sol.status is Status.OPTIMAL:
        if sol.primal_objective < -tol:
            # bounded but strictly negative: the packing slides to a finite state
            raise SolverError(f"optimal objective {sol.primal_objective:.3g} < 0 without a mechanism")
        it_u = _u_part(lp, sol.x)
        return Jammed(sol.primal_objective, np.zeros_like(it_u), it_u)
    if sol.status is Status.UNBOUNDED:
        G, A = lp.dense()
        ray = sol.ray
        if not _certifies_ray(G, A, lp.c, ray):
            raise SolverError("unbounded ray failed certification")
        u = _u_part(lp, ray)
        return Mechanism(u / np.abs(u).max(), ray)
    raise SolverError(f"cannot classify stability: solver status {sol.status.value} ({sol.message})")
