"""Solution fields ``(phi, m, u, varpi)`` on a grid, numeric or analytic."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analytic import LqBenchmark, lq_benchmark
from .discretization import (
    SAMPLING_RULES,
    ConstraintSystem,
    Grid,
    PotentialField,
    assemble_constraints,
    assemble_objective,
)
from .errors import DomainError
from .problem import ProblemInstance
from .recovery import (
    TIME_RULES,
    MaskedDerivatives,
    clearing_residual,
    dual_price,
    recover_density,
    recover_price,
    recover_value,
    value_mask,
)
from .solver import SolveReport, SolverConfig, solve

BALANCE_RULES = ("rectangle", "trapezoid")


@dataclass(frozen=True)
class Scheme:
    """Quadrature choices of the discrete problem and of the price recovery.

    ``balance_time_rule`` integrates the supply in the balance rows,
    ``v_sampling`` places ``V`` on each cell, ``price_time_rule`` integrates
    the multiplier density backwards from ``T``.
    """

    balance_time_rule: str = "trapezoid"
    v_sampling: str = "midpoint"
    price_time_rule: str = "midpoint"

    def __post_init__(self):
        if self.balance_time_rule not in BALANCE_RULES:
            raise DomainError(f"unknown balance time rule {self.balance_time_rule!r}")
        if self.v_sampling not in SAMPLING_RULES:
            raise DomainError(f"unknown potential sampling rule {self.v_sampling!r}")
        if self.price_time_rule not in TIME_RULES:
            raise DomainError(f"unknown price time rule {self.price_time_rule!r}")


@dataclass(frozen=True)
class MfgSolution:
    """Grid fields and price series.

    ``phi`` lives on all nodes ``(n_t + 1, n_x + 1)``; ``m`` and ``u`` on the
    nodes ``x_j``, ``j < n_x``, of every level.  ``times``/``varpi`` cover
    ``[2 h_t, T]``.  ``u_mask`` marks where ``u`` is meaningful.
    """

    grid: Grid
    phi: np.ndarray
    m: np.ndarray
    u: np.ndarray
    times: np.ndarray
    varpi: np.ndarray
    objective: float
    provenance: str
    u_mask: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        g = self.grid
        if self.phi.shape != g.shape:
            raise DomainError(f"phi has shape {self.phi.shape}, grid expects {g.shape}")
        for name in ("m", "u"):
            if getattr(self, name).shape != (g.n_t + 1, g.n_x):
                raise DomainError(f"{name} must have shape {(g.n_t + 1, g.n_x)}")
        if self.times.shape != self.varpi.shape:
            raise DomainError("price times and values differ in length")
        if self.provenance not in ("recovered", "analytic"):
            raise DomainError(f"unknown provenance {self.provenance!r}")

    @property
    def mask(self) -> np.ndarray:
        if self.u_mask is None:
            return np.ones(self.u.shape, dtype=bool)
        return self.u_mask


@dataclass
class NumericResult:
    solution: MfgSolution
    report: SolveReport
    constraints: ConstraintSystem


def price_window_start(grid: Grid) -> int:
    return min(2, grid.n_t)


def solve_instance(instance: ProblemInstance, grid: Grid, scheme: Scheme = Scheme(),
                   config: SolverConfig = SolverConfig(),
                   warm_start: Optional[PotentialField | np.ndarray] = None) -> NumericResult:
    """Assemble, solve and recover on ``grid``."""
    objective = assemble_objective(instance, grid, scheme.v_sampling)
    constraints = assemble_constraints(instance, grid, scheme.balance_time_rule)
    report = solve(objective, constraints, config, warm_start)
    return NumericResult(recover_solution(report, instance, constraints, scheme), report, constraints)


def recover_solution(report: SolveReport, instance: ProblemInstance, constraints: ConstraintSystem,
                     scheme: Scheme = Scheme()) -> MfgSolution:
    field_ = report.phi_star
    g = field_.grid
    price = recover_price(field_, instance, v_sampling=scheme.v_sampling, time_rule=scheme.price_time_rule)
    u = recover_value(field_, instance)
    derivs = MaskedDerivatives.build(field_, instance)
    m = recover_density(field_)
    start = price_window_start(g)
    clearing = clearing_residual(field_, instance, u, price.varpi_all)[start:]
    _, varpi_dual, _ = dual_price(report.multiplier_estimates["balance"], g.h_t)
    residuals = constraints.residuals(field_.phi)
    diag = {
        "balance_residual": residuals["balance"],
        "boundary_residual": max(residuals["left_boundary"], residuals["right_boundary"]),
        "initial_residual": residuals["initial"],
        "min_density": float(m.min()),
        "mass_defect": float(np.max(np.abs(m.sum(axis=1) * g.h_x - 1.0))),
        "clearing_residual": float(clearing.max(initial=0.0)),
        "terminal_residual": price.diagnostics["terminal_residual"],
        "interior_residual": price.diagnostics["interior_residual"],
        "dual_price_gap": float(np.max(np.abs(varpi_dual[start:] - price.varpi_all[start:]), initial=0.0)),
        "unreliable_levels": list(price.unreliable),
        "w_T": price.w_T,
    }
    return MfgSolution(
        grid=g, phi=field_.phi, m=m, u=u, times=price.times, varpi=price.varpi,
        objective=report.objective_value, provenance="recovered",
        u_mask=value_mask(derivs), diagnostics=diag,
    )


def analytic_solution(instance: ProblemInstance, grid: Grid,
                      benchmark: Optional[LqBenchmark] = None) -> MfgSolution:
    """Closed-form LQ solution sampled on ``grid``.

    ``objective`` is the continuous value of the functional; its lower-left
    cell quadrature on ``grid`` is kept in ``diagnostics``.
    """
    bm = lq_benchmark(instance, grid) if benchmark is None else benchmark
    start = price_window_start(grid)
    Q = instance.supply.sample(grid.t)
    # -int H'(varpi + u_x) m = Q with H'(varpi + u_x) = -b
    transport = bm.drift_nodes() * bm.m_nodes
    clearing = np.abs(transport.sum(axis=1) * grid.h_x - Q)[start:]
    diag = {
        "objective_grid": bm.objective_grid,
        "clearing_residual": float(clearing.max(initial=0.0)),
        "mass_defect": float(np.max(np.abs(bm.m_nodes[:, :-1].sum(axis=1) * grid.h_x - 1.0))),
    }
    return MfgSolution(
        grid=grid, phi=bm.phi, m=bm.m_nodes[:, :-1], u=bm.u[:, :-1],
        times=grid.t[start:], varpi=bm.price[start:],
        objective=bm.objective_continuous, provenance="analytic", diagnostics=diag,
    )
