"""Price formation mean-field game solved through a convex problem for the potential."""

from __future__ import annotations

__version__ = "0.1.0"

from .analytic import LqBenchmark, LqParams, explicit_price, lq_benchmark, lq_instance, solve_ansatz_odes
from .cost import CallableCost, CostModel, QuadraticCost, eval_H_of_Fprime, eval_L, eval_L_y, eval_L_z
from .discretization import (
    ConstraintSystem,
    DiscreteObjective,
    Grid,
    PotentialField,
    assemble_constraints,
    assemble_objective,
    forward_dt,
    forward_dx,
)
from .metrics import ErrorReport, compare, refinement_study
from .problem import (
    InitialDensity,
    ProblemInstance,
    SupplyModel,
    SupplyPath,
    cumulative_density,
    integrate_supply,
    select_radius,
    sine_qbar,
    zero_qbar,
)
from .recovery import recover_density, recover_price, recover_value
from .solution import MfgSolution, Scheme, analytic_solution, solve_instance
from .solver import SolveReport, SolverConfig, kkt_residual, solve

__all__ = [
    "CallableCost", "ConstraintSystem", "CostModel", "DiscreteObjective", "ErrorReport", "Grid",
    "InitialDensity", "LqBenchmark", "LqParams", "MfgSolution", "PotentialField", "ProblemInstance",
    "QuadraticCost", "Scheme", "SolveReport", "SolverConfig", "SupplyModel", "SupplyPath",
    "analytic_solution", "assemble_constraints", "assemble_objective", "compare", "cumulative_density",
    "eval_H_of_Fprime", "eval_L", "eval_L_y", "eval_L_z", "explicit_price", "forward_dt", "forward_dx",
    "integrate_supply", "kkt_residual", "lq_benchmark", "lq_instance", "recover_density", "recover_price",
    "recover_value", "refinement_study", "select_radius", "sine_qbar", "solve", "solve_ansatz_odes", "solve_instance", "zero_qbar",
]
