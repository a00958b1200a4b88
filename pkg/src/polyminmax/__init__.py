"""Two-stage polynomial min-max estimation.

Stage one fits a polynomial upper bound of an inner maximum by a sum of
squares program; stage two minimizes that polynomial over a semialgebraic
set with a moment relaxation hierarchy.  A grid oracle checks both.
"""
from .bounding_box import outer_box
from .document import DocumentError, load_problem, parse_problem, problem_document, save_problem
from .estimation import (EstimationProblem, TwoStageResult, arx_conditional_center, build_conditional_center,
                         build_robust_projection, general_problem, miso_robust_projection, simulate_miso_static,
                         simulate_quantized_arx, solve_two_stage, unconditional_center)
from .lasserre_hierarchy import HierarchyResult, running_best, solve_hierarchy
from .moments import Box, box_moment, localizing_matrix, moment_matrix, moment_vector, riesz
from .oracle import grid_max, grid_minmax, rejection_sample
from .poly_core import Polynomial, VariableSpace
from .sdp_solver import SdpProblem, SdpSolution, SolverFailure, SolverSettings, solve
from .sets import SemialgebraicSet
from .sos_relaxation import ValueFunctionApprox, approximate_value_function, l1_gap
from .sparsity import SparsityPattern, verify_rip

__all__ = ["Box", "DocumentError", "EstimationProblem", "HierarchyResult", "Polynomial", "SdpProblem", "SdpSolution",
           "SemialgebraicSet", "SolverFailure", "SolverSettings", "SparsityPattern", "TwoStageResult",
           "ValueFunctionApprox", "VariableSpace", "approximate_value_function", "arx_conditional_center",
           "box_moment", "build_conditional_center", "build_robust_projection", "general_problem", "grid_max",
           "grid_minmax", "l1_gap", "load_problem", "localizing_matrix", "miso_robust_projection", "moment_matrix",
           "moment_vector", "outer_box", "parse_problem", "problem_document", "rejection_sample", "riesz",
           "running_best", "save_problem", "simulate_miso_static", "simulate_quantized_arx", "solve",
           "solve_hierarchy", "solve_two_stage", "unconditional_center", "verify_rip"]
