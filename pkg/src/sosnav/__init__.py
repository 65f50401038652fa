"""Certified collision-free trajectory optimization.

Containment of a semialgebraic robot body in a convex free region is
certified by a minimum-scaling sums-of-squares program solved as a small
semidefinite program; the certificate value and its configuration gradient
drive an augmented-Lagrangian iLQR over a graph of free regions.
"""

from .errors import (AllocationGap, DecompositionError, NoEnclosingRegion,
                     ScenarioError, SolverFailure, SosNavError, Unreachable)
from .geometry import (Configuration, Polytope, SemialgebraicShape,
                       chebyshev_center, make_primitive, normalize_region,
                       pose_from_config)
from .polynomials import Monomial, MonomialBasis, Polynomial, basis, gram_index_map
from .sdp import Cone, ConicSolution, SDPInstance, verify_kkt
from .scaling import (GradientResult, ScalingProblem, ScalingSolution,
                      batch_solve, gradient, min_relaxation_order,
                      solve_min_scaling)
from .freespace import (BoxObstacle, OccupancyGrid, PolytopeObstacle,
                        RegionSet, coverage, decompose, load_regions,
                        rasterize, save_regions)
from .region_graph import (Allocation, PathResult, RegionGraph,
                           allocate_waypoints, build_graph,
                           insert_transition_regions, shortest_sequence)
from .trajopt import (DynamicsModel, ProblemSpec, Trajectory, make_model,
                      make_reference, rollout, solve)

__version__ = "0.1.0"

__all__ = [
    "AllocationGap", "DecompositionError", "NoEnclosingRegion",
    "ScenarioError", "SolverFailure", "SosNavError", "Unreachable",
    "Configuration", "Polytope", "SemialgebraicShape", "chebyshev_center",
    "make_primitive", "normalize_region", "pose_from_config",
    "Monomial", "MonomialBasis", "Polynomial", "basis", "gram_index_map",
    "Cone", "ConicSolution", "SDPInstance", "verify_kkt",
    "GradientResult", "ScalingProblem", "ScalingSolution", "batch_solve",
    "gradient", "min_relaxation_order", "solve_min_scaling",
    "BoxObstacle", "OccupancyGrid", "PolytopeObstacle", "RegionSet",
    "coverage", "decompose", "load_regions", "rasterize", "save_regions",
    "Allocation", "PathResult", "RegionGraph", "allocate_waypoints",
    "build_graph", "insert_transition_regions", "shortest_sequence",
    "DynamicsModel", "ProblemSpec", "Trajectory", "make_model",
    "make_reference", "rollout", "solve",
    "__version__",
]
