"""Robust nonlinear least squares under box-bounded perturbations.

Solves ``min_x max_{||y||_inf <= delta} ||F(x) - C y||^2`` through the
closed-form value function ``phi(x) = ||F(x)||^2 + 2 delta ||C^T F(x)||_1 +
||C||_F^2 delta^2`` and an adaptive-regularization method for the composite
part, with certificates for the resulting minimax pair.
"""
from ._kernels import BACKEND
from .errors import (DegenerateInput, DimensionError, MaxIterations, NonFiniteInput, NonFiniteOutput,
                     ParseError, RankDeficient, RobustNLSError, TooManyVertices)
from .perturbation import PerturbationModel, build_perturbation, to_original_coords
from .problems import (ProblemSpec, finite_difference_check, linear_spec, load_problem, make_composite_1d,
                       make_linear, make_rosenbrock, make_two_layer_net, make_zero_residual, save_problem)
from .solver import SolveResult, SolverParams, extract_minimax, minimize_psi, write_trace_csv
from .subproblem import criticality_measure, linearize, solve_step
from .value_function import (InnerMaximizer, ResidualProblem, directional_derivative_phi, eval_f, eval_phi,
                             eval_psi, gradient_phi, inner_argmax, inner_max_bruteforce)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DegenerateInput", "DimensionError", "MaxIterations", "NonFiniteInput", "NonFiniteOutput",
    "ParseError", "RankDeficient", "RobustNLSError", "TooManyVertices",
    "PerturbationModel", "build_perturbation", "to_original_coords",
    "ProblemSpec", "finite_difference_check", "linear_spec", "load_problem", "make_composite_1d",
    "make_linear", "make_rosenbrock", "make_two_layer_net", "make_zero_residual", "save_problem",
    "SolveResult", "SolverParams", "extract_minimax", "minimize_psi", "write_trace_csv",
    "criticality_measure", "linearize", "solve_step",
    "InnerMaximizer", "ResidualProblem", "directional_derivative_phi", "eval_f", "eval_phi",
    "eval_psi", "gradient_phi", "inner_argmax", "inner_max_bruteforce",
]
