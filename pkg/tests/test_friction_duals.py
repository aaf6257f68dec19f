import logging

import numpy as np
import pytest
from conftest import feasible_displacement, two_cell_problem, voronoi_mesh
from hypothesis import given, settings
from hypothesis import strategies as st

from jamstress.friction_duals import (
    InterfaceForces,
    cell_tractions,
    check_cell_balance,
    check_contact_kkt,
    check_tresca,
    dual_residual_by_cell,
    edge_traction,
    extract_forces,
    forces_from_uniform_stress,
    forces_to_duals,
    warn_if_unbalanced,
    weak_duality_check,
)
from jamstress.geometry import generate_grid
from jamstress.lp_core import Status, solve_lp
from jamstress.primal import FrictionProblem, assemble_lp, tractions_from_matrix, tractions_per_side


def solved(problem):
    lp = assemble_lp(problem)
    sol = solve_lp(lp)
    assert sol.status is Status.OPTIMAL
    return lp, sol, extract_forces(sol, lp, problem.mesh)


class TestExtract:
    def test_two_cell(self):
        p = two_cell_problem()
        _, _, f = solved(p)
        assert f.fn[0] == pytest.approx(-1.0, abs=1e-8)
        assert f.ft[0] == pytest.approx(0.0, abs=1e-8)
        np.testing.assert_allclose(f.y, 0, atol=1e-8)

    def test_zero_traction(self):
        mesh = generate_grid(3, 3)
        _, _, f = solved(FrictionProblem(mesh, 1.0, tractions_from_matrix(mesh, np.zeros((2, 2)))))
        np.testing.assert_allclose(f.fn, 0, atol=1e-9)
        np.testing.assert_allclose(f.ft, 0, atol=1e-9)

    def test_verif1_audits(self):
        mesh = generate_grid(4, 4)
        p = FrictionProblem(mesh, 10.0, tractions_from_matrix(mesh, -np.ones((2, 2))))
        _, _, f = solved(p)
        u = np.zeros((mesh.n_cells, 2))
        assert np.abs(check_cell_balance(f, p)).max() <= 1e-7
        assert check_contact_kkt(u, f, mesh).ok
        assert check_tresca(u, f, p.s_T, mesh).ok

    def test_requires_optimal(self):
        p = two_cell_problem(+1.0)
        lp = assemble_lp(p)
        with pytest.raises(ValueError):
            extract_forces(solve_lp(lp), lp, p.mesh)

    def test_missing_rows(self):
        p = two_cell_problem()
        lp = assemble_lp(p)
        sol = solve_lp(lp)
        lp.row_layout = [(99, k) for _, k in lp.row_layout]
        with pytest.raises(ValueError):
            extract_forces(sol, lp, p.mesh)


class TestEdgeTraction:
    def test_two_cell_sides(self):
        mesh = generate_grid(2, 1, (0, 0, 2, 1))
        e = mesh.edges[mesh.internal_edges[0]]
        np.testing.assert_allclose(edge_traction((-1.0, 0.0), e, e.c_minus), [-1, 0])
        np.testing.assert_allclose(edge_traction((-1.0, 0.0), e, e.c_plus), [1, 0])

    def test_arithmetic(self):
        mesh = generate_grid(2, 1, (0, 0, 4, 2))
        e = mesh.edges[mesh.internal_edges[0]]
        assert e.length == 2.0
        np.testing.assert_allclose(edge_traction((0.0, 2.0), e, e.c_minus), [0, 1])

    def test_not_adjacent(self):
        mesh = generate_grid(3, 1)
        e = mesh.edges[mesh.internal_edges[0]]
        other = ({0, 1, 2} - {e.c_minus, e.c_plus}).pop()
        with pytest.raises(ValueError):
            edge_traction((1.0, 0.0), e, other)


class TestBalance:
    def test_two_cell(self):
        p = two_cell_problem()
        _, _, f = solved(p)
        assert np.abs(check_cell_balance(f, p)).max() <= 1e-9

    def test_balanced_load_gives_zero_y(self):
        mesh = voronoi_mesh(25, 11)
        _, _, f = solved(FrictionProblem(mesh, 10.0, tractions_from_matrix(mesh, [[-2, 0.5], [0.5, -1]])))
        np.testing.assert_allclose(f.y, 0, atol=1e-8)

    def test_perturbation_is_linear(self):
        p = two_cell_problem()
        _, _, f = solved(p)
        base = check_cell_balance(f, p)
        g = f.copy()
        g.fn[0] += 0.1
        delta = np.linalg.norm(check_cell_balance(g, p) - base, axis=1)
        np.testing.assert_allclose(delta, [0.1, 0.1], atol=1e-12)

    def test_global_identity(self):
        mesh = generate_grid(3, 3)
        with_pull = tractions_per_side(mesh, {"top": (0.3, 0.2)}, default=(0.0, 0.0))
        p = FrictionProblem(mesh, 10.0, with_pull)
        f = InterfaceForces(np.array(mesh.internal_edges), np.linspace(-1, 0, 12), np.linspace(-2, 2, 12), np.array([0.05, -0.02]))
        r = check_cell_balance(f, p)
        # internal tractions cancel pairwise
        np.testing.assert_allclose(r.sum(axis=0), p.resultant - mesh.n_cells * f.y, atol=1e-10)

    def test_unbalanced_warning(self, caplog):
        mesh = generate_grid(2, 2)
        p = FrictionProblem(mesh, 10.0, tractions_per_side(mesh, {"top": (0.0, -1.0)}))
        f = InterfaceForces(np.array(mesh.internal_edges), np.zeros(4), np.zeros(4), np.array([0.0, -0.25]))
        with caplog.at_level(logging.WARNING):
            assert warn_if_unbalanced(f, p)
        assert "unbalanced" in caplog.text


class TestAudits:
    def test_two_cell_contact(self):
        p = two_cell_problem()
        _, _, f = solved(p)
        a = check_contact_kkt(np.zeros((2, 2)), f, p.mesh)
        assert a.max_complementarity == 0.0
        assert max(a.max_penetration, a.max_tension) <= 1e-9

    def test_tensile_force_flagged(self):
        p = two_cell_problem()
        f = InterfaceForces(np.array(p.mesh.internal_edges), np.array([1.0]), np.array([0.0]), np.zeros(2))
        assert not check_contact_kkt(np.zeros((2, 2)), f, p.mesh).ok

    def test_penetration_flagged(self):
        p = two_cell_problem()
        f = InterfaceForces(np.array(p.mesh.internal_edges), np.array([-1.0]), np.array([0.0]), np.zeros(2))
        a = check_contact_kkt(np.array([[0.1, 0], [-0.1, 0]]), f, p.mesh)
        assert a.max_penetration == pytest.approx(0.2) and not a.ok

    def test_tresca_bound(self):
        p = two_cell_problem()
        ok = InterfaceForces(np.array(p.mesh.internal_edges), np.array([-1.0]), np.array([0.0]), np.zeros(2))
        assert check_tresca(np.zeros((2, 2)), ok, 10.0, p.mesh).ok
        bad = InterfaceForces(np.array(p.mesh.internal_edges), np.array([-1.0]), np.array([11.0]), np.zeros(2))
        a = check_tresca(np.zeros((2, 2)), bad, 10.0, p.mesh)
        assert a.max_excess == pytest.approx(1.0) and not a.ok

    def test_tresca_alignment(self):
        p = two_cell_problem()
        u = np.array([[0.0, 0.0], [0.0, 0.5]])  # c_plus slides up
        resisting = InterfaceForces(np.array(p.mesh.internal_edges), np.array([0.0]), np.array([-10.0]), np.zeros(2))
        assert check_tresca(u, resisting, 10.0, p.mesh).ok
        helping = InterfaceForces(np.array(p.mesh.internal_edges), np.array([0.0]), np.array([10.0]), np.zeros(2))
        assert check_tresca(u, helping, 10.0, p.mesh).max_misalignment == pytest.approx(10.0)


class TestDuality:
    def test_zero_displacement(self):
        p = two_cell_problem()
        lp, _, f = solved(p)
        assert weak_duality_check(np.zeros((2, 2)), f, p, lp) == 0.0

    def test_infeasible_u_rejected(self):
        p = two_cell_problem()
        lp, _, f = solved(p)
        with pytest.raises(ValueError):
            weak_duality_check(np.array([[0.1, 0], [-0.1, 0]]), f, p, lp)
        with pytest.raises(ValueError):
            weak_duality_check(np.array([[0.0, 0], [0.1, 0]]), f, p, lp)

    def test_random_feasible_points(self, rng):
        mesh = voronoi_mesh(20, 7)
        p = FrictionProblem(mesh, 10.0, tractions_from_matrix(mesh, -np.eye(2)))
        lp, _, f = solved(p)
        for _ in range(100):
            assert weak_duality_check(feasible_displacement(mesh, rng), f, p, lp) >= -1e-9

    def test_dual_round_trip(self):
        p = two_cell_problem()
        lp, sol, f = solved(p)
        z, y = forces_to_duals(f, p, lp)
        np.testing.assert_allclose(z, sol.z, atol=1e-8)

    def test_physical_and_lp_residuals_agree(self):
        mesh = voronoi_mesh(30, 3)
        p = FrictionProblem(mesh, 10.0, tractions_from_matrix(mesh, [[-1, 0.4], [0.4, -1]]))
        lp, sol, f = solved(p)
        du, dv = dual_residual_by_cell(sol, lp, mesh.n_cells)
        # the u-rows of G'z + A'y + c are minus the cell residuals
        np.testing.assert_allclose(du, -check_cell_balance(f, p), atol=1e-8)
        assert np.abs(dv).max() <= 1e-8

    def test_scaling_two_cell(self):
        for alpha in (0.5, 2.0, 7.0):
            p = two_cell_problem(-alpha)
            _, _, f = solved(p)
            assert f.fn[0] == pytest.approx(-alpha, abs=1e-8 * alpha)
            assert f.ft[0] == pytest.approx(0.0, abs=1e-8 * alpha)


class TestUniformStress:
    @pytest.mark.parametrize("S", [-np.eye(2), -np.ones((2, 2)), [[-3, 0.5], [0.5, -1]]])
    def test_balanced(self, S):
        mesh = voronoi_mesh(20, 7)
        p = FrictionProblem(mesh, 10.0, tractions_from_matrix(mesh, S))
        f = forces_from_uniform_stress(S, p)
        assert np.abs(check_cell_balance(f, p)).max() <= 1e-12
        np.testing.assert_allclose(f.y, 0, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 30))
def test_action_reaction_exact(seed, n):
    rng = np.random.default_rng(seed)
    mesh = voronoi_mesh(n, seed)
    k = len(mesh.internal_edges)
    f = InterfaceForces(np.array(mesh.internal_edges, dtype=int), rng.normal(size=k), rng.normal(size=k), np.zeros(2))
    lam = cell_tractions(f, mesh)
    for eid in mesh.internal_edges:
        e = mesh.edges[eid]
        a, b = lam[eid, e.c_minus], lam[eid, e.c_plus]
        assert np.array_equal(a, -b)
        assert np.array_equal(a + b, np.zeros(2))
