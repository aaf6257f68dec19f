"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
before asserting, so ``pytest -v`` output doubles as the acceptance report.
"""

import time

import numpy as np
import pytest
from conftest import feasible_displacement
from test_lp_core import lp as small_lp
from test_lp_core import random_bounded_lp, vertex_oracle

from jamstress.friction_duals import (
    cell_tractions,
    check_cell_balance,
    check_contact_kkt,
    check_tresca,
    forces_from_uniform_stress,
    forces_to_duals,
    weak_duality_check,
)
from jamstress.lp_core import Jammed, Mechanism, Status, dual_objective, solve_lp
from jamstress.pipeline import RunConfig, run_pipeline
from jamstress.primal import assemble_lp

TOL = 1e-7


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}")
        assert ok, detail

    return emit


def timed_preset(name):
    cfg = RunConfig.preset(name)
    t0 = time.perf_counter()
    res = run_pipeline(cfg, write=False)
    return res, time.perf_counter() - t0


def hand_dual_check(S, res):
    """Feasibility and objective of the dual built from a uniform stress ``S``."""
    problem = res.problem
    lp = assemble_lp(problem)
    forces = forces_from_uniform_stress(S, problem)
    z, y = forces_to_duals(forces, problem, lp)
    G, A = lp.dense()
    dres = float(np.abs(G.T @ z + A.T @ y + lp.c).max())
    zero = np.zeros((problem.mesh.n_cells, 2))
    tresca = check_tresca(zero, forces, problem.s_T, problem.mesh, TOL)
    contact = check_contact_kkt(zero, forces, problem.mesh, TOL)
    return {
        "forces": forces,
        "min_z": float(z.min()),
        "dual_residual": dres,
        "objective": dual_objective(lp, np.maximum(z, 0.0), y),
        "tresca_excess": tresca.max_excess,
        "tension": contact.max_tension,
        "balance": float(np.abs(check_cell_balance(forces, problem)).max()),
    }


def gated(res, keys=None):
    audits = res.report["audits"]
    keys = keys or audits["values"]
    return {k: audits["values"][k] for k in keys}, all(audits["passed"][k] for k in keys)


def test_criterion_1_two_cell_oracle(verdict):
    res, dt = timed_preset("twocell")
    f = res.forces
    balance = float(np.abs(check_cell_balance(f, res.problem)).max())
    ok = (
        isinstance(res.stability, Jammed)
        and abs(res.solution.primal_objective) <= 1e-9
        and abs(f.fn[0] + 1.0) <= 1e-8
        and abs(f.ft[0]) <= 1e-8
        and np.abs(f.y).max() <= 1e-8
        and balance <= 1e-9
        and dt < 0.1
    )
    verdict(
        1, "two-cell oracle", ok,
        f"objective={res.solution.primal_objective:.2e} fn={f.fn[0]:.10f} ft={f.ft[0]:.2e} "
        f"|y|={np.abs(f.y).max():.2e} balance={balance:.2e} time={dt:.3f}s",
    )


def test_criterion_2_verification_grid(verdict):
    S = -np.ones((2, 2))
    res, dt = timed_preset("verif1")
    hand = hand_dual_check(S, res)
    coincide = max(
        np.abs(res.forces.fn - hand["forces"].fn).max(), np.abs(res.forces.ft - hand["forces"].ft).max()
    ) <= 1e-6
    feasible = hand["min_z"] >= -1e-10 and hand["dual_residual"] <= 1e-8
    match = abs(hand["objective"] - res.solution.dual_objective) <= TOL
    if coincide:
        err = max(
            float(np.abs(fld.value(t, x) - S).max())
            for fld in res.reconstruction.fields.values()
            for t, el in enumerate(fld.elements)
            for x in (*el.points, el.barycenter)
        )
        stress_ok = err <= 1e-6
        detail = f"solver duals coincide with hand duals, max|sigma-S|={err:.2e}"
    else:
        values, stress_ok = gated(res)
        detail = f"solver picked another maximizer, audits max={max(values.values()):.2e}"
    ok = isinstance(res.stability, Jammed) and feasible and match and stress_ok and dt < 1.0
    verdict(
        2, "verification grid", ok,
        f"hand dual residual={hand['dual_residual']:.2e} objective={hand['objective']:.1e} "
        f"solver dual objective={res.solution.dual_objective:.2e}; {detail}; time={dt:.3f}s",
    )


def test_criterion_3_verification_voronoi(verdict):
    S = -np.ones((2, 2))
    res, dt = timed_preset("verif2")
    hand = hand_dual_check(S, res)
    gap = abs(hand["objective"] - res.solution.primal_objective)
    feasible = hand["min_z"] >= -1e-10 and hand["dual_residual"] <= 1e-8 and hand["balance"] <= TOL
    values, audits_ok = gated(res)
    ok = isinstance(res.stability, Jammed) and feasible and gap <= TOL and audits_ok and dt < 2.0
    verdict(
        3, "verification Voronoi", ok,
        f"cells={res.mesh.n_cells} hand dual residual={hand['dual_residual']:.2e} gap={gap:.2e} "
        f"audits max={max(values.values()):.2e} time={dt:.3f}s",
    )


def test_criterion_4_homogeneous_compression(verdict):
    S = -np.eye(2)
    res, dt = timed_preset("compress60")
    hand = hand_dual_check(S, res)
    gap = abs(hand["objective"] - res.solution.primal_objective)
    feasible = (
        hand["min_z"] >= -1e-10
        and hand["tresca_excess"] <= TOL
        and hand["tension"] <= TOL
        and hand["balance"] <= TOL
        and hand["dual_residual"] <= 1e-8
    )
    differs = max(np.abs(res.forces.fn - hand["forces"].fn).max(), np.abs(res.forces.ft - hand["forces"].ft).max())
    ok = isinstance(res.stability, Jammed) and res.mesh.n_cells == 60 and feasible and gap <= TOL and dt < 10.0
    verdict(
        4, "homogeneous compression", ok,
        f"hand dual from -I: balance={hand['balance']:.2e} tresca excess={hand['tresca_excess']:.1e} "
        f"tension={hand['tension']:.1e} gap={gap:.2e}; solver maximizer differs by {differs:.3f}; time={dt:.3f}s",
    )


def test_criterion_5_shear_brick_wall(verdict):
    res, dt = timed_preset("shear-brick")
    values, audits_ok = gated(res)
    mesh = res.mesh
    lam = cell_tractions(res.forces, mesh)
    flux_err = 0.0
    sym = 0.0
    pointwise = 0.0
    for cid, fld in res.reconstruction.fields.items():
        expected = np.array([
            mesh.edges[e].length * (res.problem.traction(e) if mesh.edges[e].is_boundary else lam[e, cid])
            for e in mesh.cell_edges[cid]
        ])
        flux_err = max(flux_err, float(np.abs(fld.boundary_forces() - expected).max()))
        norm = 1.0 + np.abs(fld.barycenter_values()).max()
        areas = np.array([el.area for el in fld.elements])
        sym = max(sym, float((np.abs(fld.weak_symmetry()) / (norm * areas)).max()))
        for t, el in enumerate(fld.elements):
            for x in el.points:
                s = fld.value(t, x)
                pointwise = max(pointwise, abs(s[0, 1] - s[1, 0]))
    ok = (
        isinstance(res.stability, Jammed)
        and audits_ok
        and flux_err <= 1e-12
        and sym <= 1e-9
        and pointwise > 1e-3
        and dt < 5.0
    )
    verdict(
        5, "shear brick wall", ok,
        f"cells={mesh.n_cells} audits max={max(values.values()):.2e} flux err={flux_err:.1e} "
        f"weak symmetry={sym:.1e} max pointwise |s12-s21|={pointwise:.3f} time={dt:.3f}s",
    )


def test_criterion_6_collapse_detection(verdict):
    res, dt = timed_preset("twocell-tension")
    lp = assemble_lp(res.problem)
    G, A = lp.dense()
    st = res.stability
    ok = isinstance(st, Mechanism) and res.exit_code == 2
    detail = f"status={res.solution.status.value}"
    if ok:
        gd = float((G @ st.ray).max())
        ad = float(np.abs(A @ st.ray).max())
        cd = float(lp.c @ st.ray)
        mode = float(np.abs(st.u - np.array([[-1.0, 0.0], [1.0, 0.0]])).max())
        ok = gd <= 1e-10 and ad <= 1e-10 and cd < 0 and mode <= 1e-6 and dt < 0.1
        detail += f" max Gd={gd:.1e} |Ad|={ad:.1e} c.d={cd:.3f} mode err={mode:.1e} time={dt:.3f}s"
    verdict(6, "collapse detection", ok, detail)


def test_criterion_7_property_suites(verdict):
    rng = np.random.default_rng(77)
    worst = {"action_reaction": 0.0, "weak_duality": np.inf, "gap": 0.0, "slackness": 0.0}
    for name in ("twocell", "verif1", "verif2", "shear-brick", "compress60"):
        res = run_pipeline(RunConfig.preset(name), write=False)
        mesh, problem = res.mesh, res.problem
        lam = cell_tractions(res.forces, mesh)
        for eid in mesh.internal_edges:
            e = mesh.edges[eid]
            if not np.array_equal(lam[eid, e.c_plus], -lam[eid, e.c_minus]):
                worst["action_reaction"] = np.inf
        lp = assemble_lp(problem)
        for _ in range(100):
            u = feasible_displacement(mesh, rng)
            worst["weak_duality"] = min(worst["weak_duality"], weak_duality_check(u, res.forces, problem, lp))
        G, _ = lp.dense()
        sol = res.solution
        worst["gap"] = max(worst["gap"], sol.gap)
        worst["slackness"] = max(worst["slackness"], float(np.max(sol.z * (lp.h - G @ sol.x))))

    lp_err = 0.0
    lp_rng = np.random.default_rng(2024)
    for _ in range(50):
        c, G, h, A, b = random_bounded_lp(lp_rng)
        sol = solve_lp(small_lp(c, G, h, A, b))
        if sol.status is not Status.OPTIMAL:
            lp_err = np.inf
            continue
        lp_err = max(lp_err, abs(sol.primal_objective - vertex_oracle(c, G, h, A, b)))

    ok = (
        worst["action_reaction"] == 0.0
        and worst["weak_duality"] >= -1e-9
        and worst["gap"] <= TOL
        and worst["slackness"] <= TOL
        and lp_err <= 1e-8
    )
    verdict(
        7, "property suites", ok,
        f"action-reaction exact={worst['action_reaction'] == 0.0} min E(u)-E*(f)={worst['weak_duality']:.2e} "
        f"max gap={worst['gap']:.1e} max slackness={worst['slackness']:.1e} LP oracle err={lp_err:.1e}",
    )
