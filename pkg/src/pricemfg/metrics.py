"""Error norms between solutions and grid refinement studies."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .discretization import Grid
from .errors import DomainError, GridMismatchError
from .problem import ProblemInstance
from .solution import MfgSolution, Scheme, analytic_solution, solve_instance
from .solver import SolverConfig


@dataclass(frozen=True)
class Norms:
    sup: float
    l1: float
    l2: float


def _axis_weights(n: int, h: float, nodes: int) -> np.ndarray:
    """Trapezoid weights when the axis carries all ``nodes`` grid nodes, else ``h`` (cells)."""
    w = np.full(n, h)
    if n == nodes:
        w[[0, -1]] *= 0.5
    return w


def quadrature_weights(shape: tuple[int, ...], grid: Grid) -> np.ndarray:
    if len(shape) == 1:
        return _axis_weights(shape[0], grid.h_t, grid.n_t + 1)
    wt = _axis_weights(shape[0], grid.h_t, grid.n_t + 1)
    wx = _axis_weights(shape[1], grid.h_x, grid.n_x + 1)
    return wt[:, None] * wx[None, :]


def field_norms(diff: np.ndarray, weights: np.ndarray, mask: Optional[np.ndarray] = None) -> Norms:
    """Sup, weighted L1 and L2 of ``diff`` restricted to ``mask``."""
    a = np.abs(np.asarray(diff, dtype=float))
    w = np.asarray(weights, dtype=float)
    if mask is not None:
        a = np.where(mask, a, 0.0)
        w = np.where(mask, w, 0.0)
    return Norms(
        sup=float(a.max(initial=0.0)),
        l1=float(np.sum(w * a)),
        l2=float(math.sqrt(np.sum(w * a**2))),
    )


def _time_weights(times: np.ndarray) -> np.ndarray:
    if times.size < 2:
        return np.ones_like(times)
    w = np.zeros_like(times)
    h = np.diff(times)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


@dataclass
class ErrorReport:
    """Per-field norms plus objective gap and residual maxima."""

    fields: dict[str, Norms]
    objective_gap: float
    balance_residual: float
    clearing_residual: float
    mask_coverage: float

    def to_dict(self) -> dict:
        return {
            "fields": {k: asdict(v) for k, v in self.fields.items()},
            "objective_gap": self.objective_gap,
            "balance_residual": self.balance_residual,
            "clearing_residual": self.clearing_residual,
            "mask_coverage": self.mask_coverage,
        }


def compare(a: MfgSolution, b: MfgSolution, grid: Optional[Grid] = None) -> ErrorReport:
    """Error norms between two solutions on the same grid.

    ``u`` is compared on the intersection of both masks, the price on the
    common reporting window.  Symmetric in ``a`` and ``b``.
    """
    grid = a.grid if grid is None else grid
    if a.grid != grid or b.grid != grid:
        raise GridMismatchError(f"solutions live on {a.grid} and {b.grid}, expected {grid}")
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise GridMismatchError("price series cover different times")

    def norms(x, y, mask=None):
        d = x - y
        return field_norms(d, quadrature_weights(d.shape, grid), mask)

    def phi_t(p):
        return (p[1:, :-1] - p[:-1, :-1]) / grid.h_t

    def phi_x(p):
        return np.diff(p, axis=1) / grid.h_x

    u_mask = a.mask & b.mask
    fields = {
        "phi": norms(a.phi, b.phi),
        "phi_t": norms(phi_t(a.phi), phi_t(b.phi)),
        "phi_x": norms(phi_x(a.phi), phi_x(b.phi)),
        "m": norms(a.m, b.m),
        "u": norms(a.u, b.u, u_mask),
        "varpi": field_norms(a.varpi - b.varpi, _time_weights(a.times)),
    }

    def worst(key):
        return float(max(a.diagnostics.get(key, 0.0), b.diagnostics.get(key, 0.0)))

    return ErrorReport(
        fields=fields,
        objective_gap=float(abs(a.objective - b.objective)),
        balance_residual=worst("balance_residual"),
        clearing_residual=worst("clearing_residual"),
        mask_coverage=float(u_mask.mean()),
    )


@dataclass
class RefinementRow:
    grid: Grid
    h_t: float
    h_x: float
    objective: float
    objective_analytic: float
    errors: ErrorReport
    orders: dict[str, float] = field(default_factory=dict)
    converged: bool = True


def empirical_order(e_coarse: float, e_fine: float, ratio: float = 2.0) -> float:
    """``log(e_coarse / e_fine) / log(ratio)``; NaN when either error vanishes."""
    if e_coarse <= 0 or e_fine <= 0:
        return float("nan")
    return math.log(e_coarse / e_fine) / math.log(ratio)


def refinement_study(
    instance_for: Callable[[Grid], ProblemInstance] | ProblemInstance,
    grids: Sequence[Grid],
    scheme: Scheme = Scheme(),
    config: SolverConfig = SolverConfig(),
    norm: str = "l1",
) -> list[RefinementRow]:
    """Solve and compare on every grid of a refinement chain.

    ``instance_for`` is either one instance whose supply nodes refine every
    grid, or a builder returning the instance for a grid.  Orders use the
    ratio of successive ``h_t`` and the chosen ``norm``.
    """
    if len(grids) < 2:
        raise DomainError("a refinement study needs at least two grids")
    rows: list[RefinementRow] = []
    for g in grids:
        inst = instance_for(g) if callable(instance_for) else instance_for
        num = solve_instance(inst, g, scheme, config)
        ana = analytic_solution(inst, g)
        rows.append(RefinementRow(
            grid=g, h_t=g.h_t, h_x=g.h_x,
            objective=num.report.objective_value, objective_analytic=ana.objective,
            errors=compare(num.solution, ana, g), converged=num.report.converged,
        ))
    return attach_orders(rows, norm)


def attach_orders(rows: list[RefinementRow], norm: str = "l1") -> list[RefinementRow]:
    """Empirical order of every field between each grid and the previous one."""
    for prev, row in zip(rows, rows[1:]):
        ratio = prev.h_t / row.h_t
        row.orders = {
            name: empirical_order(getattr(prev.errors.fields[name], norm), getattr(row.errors.fields[name], norm), ratio)
            for name in row.errors.fields
        }
    return rows


def refinement_table(rows: Sequence[RefinementRow], norm: str = "l1") -> list[dict]:
    """Flat records, one per grid: objectives and ``norm`` errors."""
    out = []
    for r in rows:
        rec = {"n_t": r.grid.n_t, "n_x": r.grid.n_x, "h_t": r.h_t, "h_x": r.h_x,
               "objective": r.objective, "objective_analytic": r.objective_analytic}
        for name, nm in r.errors.fields.items():
            rec[f"{name}_{norm}"] = getattr(nm, norm)
        out.append(rec)
    return out


def order_table(rows: Sequence[RefinementRow]) -> list[dict]:
    """One record per successive grid pair with the empirical orders."""
    return [{"n_t_coarse": a.grid.n_t, "n_t_fine": b.grid.n_t, **{f"{k}_order": v for k, v in b.orders.items()}}
            for a, b in zip(rows, rows[1:])]
