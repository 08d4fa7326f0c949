"""Fractional mean curvature of periodic graphs and its bifurcation branches."""

__version__ = "0.1.0"

from .core import (ModelParams, SymmetricField, inner_product, mode_classes,
                   project_out, unit_mode)
from .quadrature import QuadratureSpec
from .nmc_operator import (OperatorResult, lattice_correction,
                           linearized_lattice_correction, linearized_nmc,
                           nmc_graph, nmc_graph_regularized, nmc_multiperiodic)
from .spectrum import (DispersionTable, dispersion_A, dispersion_B, eigencheck,
                       find_lambda_star, nu, nu_zero_limit)
from .bifurcation import (BranchPoint, ReducedProblem, continue_branch,
                          newton_solve, reduced_jacobian, reduced_residual,
                          verify_cnmc)

__all__ = [
    "ModelParams", "SymmetricField", "inner_product", "mode_classes", "project_out",
    "unit_mode", "QuadratureSpec", "OperatorResult", "lattice_correction",
    "linearized_lattice_correction", "linearized_nmc", "nmc_graph",
    "nmc_graph_regularized", "nmc_multiperiodic", "DispersionTable", "dispersion_A",
    "dispersion_B", "eigencheck", "find_lambda_star", "nu", "nu_zero_limit",
    "BranchPoint", "ReducedProblem", "continue_branch", "newton_solve",
    "reduced_jacobian", "reduced_residual", "verify_cnmc",
]
