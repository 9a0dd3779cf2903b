"""Adaptive hp virtual element solver for the 2D Poisson problem on general
polygonal meshes."""

from .adaptivity import AdaptConfig, mark, run, run_h_only
from .assembly import assemble, solve, solve_poisson
from .errors import ConfigError, DegenerateElementError, MeshError, SolverError
from .estimator import report
from .mesh import PolyMesh, build_cartesian, build_lshape, build_voronoi, refine_elements, validate
from .problems import effectivity, energy_error, make_problem
from .projectors import build_local_operators
from .vemspace import assign_degrees, build_dofmap, interpolate_boundary

__all__ = [
    "AdaptConfig", "ConfigError", "DegenerateElementError", "MeshError",
    "PolyMesh", "SolverError", "assemble", "assign_degrees",
    "build_cartesian", "build_dofmap", "build_local_operators", "build_lshape",
    "build_voronoi", "effectivity", "energy_error", "interpolate_boundary",
    "make_problem", "mark", "refine_elements", "report", "run", "run_h_only",
    "solve", "solve_poisson", "validate",
]

__version__ = "0.1.0"
