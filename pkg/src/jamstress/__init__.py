"""Interface forces and equilibrated stresses in jammed packings of rigid
convex polygonal cells under Tresca friction."""

from .friction_duals import InterfaceForces, extract_forces
from .geometry import MeshError, PolygonalMesh, build_mesh, generate_brick_wall, generate_grid, generate_voronoi
from .lp_core import Jammed, Mechanism, SolverError, Status, classify_stability, solve_lp
from .pipeline import RunConfig, run_pipeline
from .primal import FrictionProblem, assemble_lp
from .reconstruct import reconstruct_all

__version__ = "0.1.0"

__all__ = [
    "FrictionProblem",
    "InterfaceForces",
    "Jammed",
    "Mechanism",
    "MeshError",
    "PolygonalMesh",
    "RunConfig",
    "SolverError",
    "Status",
    "assemble_lp",
    "build_mesh",
    "classify_stability",
    "extract_forces",
    "generate_brick_wall",
    "generate_grid",
    "generate_voronoi",
    "reconstruct_all",
    "run_pipeline",
    "solve_lp",
]
