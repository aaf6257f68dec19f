import numpy as np
import pytest

from jamstress.geometry import generate_grid, generate_voronoi
from jamstress.primal import FrictionProblem, tractions_from_matrix


def two_cell_problem(sign=-1.0, s_T=10.0):
    """(0,2)x(0,1) split at x=1 with g = sign * n on the boundary."""
    mesh = generate_grid(2, 1, (0.0, 0.0, 2.0, 1.0))
    return FrictionProblem(mesh, s_T, tractions_from_matrix(mesh, sign * np.eye(2)))


def voronoi_mesh(n, seed):
    rng = np.random.default_rng(seed)
    return generate_voronoi(rng.uniform(0.0, 1.0, size=(n, 2)))


def feasible_displacement(mesh, rng, scale=1.0):
    """Random u with sum_c u_c = 0 and no interpenetration.

    An expansion about the centroid opens every interface (x_c+ - x_c- has a
    positive normal component), and a small random perturbation on top of it
    keeps every gap non-negative.
    """
    xc = mesh.centers
    u = xc - xc.mean(axis=0)
    gaps = [float((u[e.c_plus] - u[e.c_minus]) @ e.normal) for e in map(mesh.edges.__getitem__, mesh.internal_edges)]
    margin = min(gaps, default=1.0)
    w = rng.normal(size=u.shape)
    w -= w.mean(axis=0)
    w *= 0.25 * margin / max(np.abs(w).max(), 1e-300)
    return scale * rng.uniform(0.1, 2.0) * (u + w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
