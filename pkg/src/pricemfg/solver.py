"""Interior-point solver for the discrete potential problem.

Pinned nodes (initial level, both space boundaries) are eliminated; the
remaining unknowns carry one balance equality per time level and the
monotonicity inequalities ``D_x phi >= 0``.  The inequalities enter through
a logarithmic barrier ``-mu * h_x h_t * sum(log D_x phi)``; each barrier
subproblem is minimised by damped Newton on the equality-constrained KKT
system with the exact sparse Hessian, and ``mu`` is driven to ``mu_final``.
Iterates stay strictly inside ``D_x phi > 0`` so the perspective integrand is
smooth wherever it is evaluated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq, lsq_linear

from .discretization import (
    ConstraintSystem,
    DiscreteObjective,
    Grid,
    PotentialField,
    close_fixed,
    difference_operators,
)
from .errors import DomainError, InfeasibleConstraintsError

log = logging.getLogger(__name__)

# a distance to the bound that shrinks faster than this per barrier stage marks an empty cell
SNAP_RATIO = 0.4
SCREEN_ITER = 40
SCREEN_FACTOR = 1e3
POLISH_STAGES = 3


@dataclass(frozen=True)
class SolverConfig:
    max_outer: int = 30
    max_inner: int = 80
    tol_kkt: float = 1e-7
    tol_feas: float = 1e-9
    barrier_mu0: float = 1e-2
    barrier_shrink: float = 0.1
    mu_final: float = 1e-9
    stall_tol: float = 1e-10
    stall_window: int = 5
    start_theta: float = 0.05
    snap_tol: float = 1e-4

    def __post_init__(self):
        for name in ("tol_kkt", "tol_feas", "barrier_mu0", "mu_final", "stall_tol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"solver.{name} must be > 0")
        if not 0 < self.barrier_shrink < 1:
            raise DomainError("solver.barrier_shrink must lie in (0, 1)")
        if self.mu_final > self.barrier_mu0:
            raise DomainError("solver.mu_final must not exceed solver.barrier_mu0")
        if self.snap_tol < 0:
            raise DomainError("solver.snap_tol must be >= 0")
        if self.max_outer < 1 or self.max_inner < 1:
            raise DomainError("solver iteration limits must be >= 1")

    def tightened(self, factor: float = 10.0) -> "SolverConfig":
        return SolverConfig(
            max_outer=self.max_outer + 4,
            max_inner=self.max_inner,
            tol_kkt=self.tol_kkt / factor,
            tol_feas=self.tol_feas / factor,
            barrier_mu0=self.barrier_mu0,
            barrier_shrink=self.barrier_shrink,
            mu_final=self.mu_final / factor,
            stall_tol=self.stall_tol / factor,
            stall_window=self.stall_window,
            start_theta=self.start_theta,
            snap_tol=self.snap_tol,
        )


@dataclass
class SolveReport:
    phi_star: PotentialField
    objective_value: float
    kkt_residual: float
    feasibility_residual: float
    iterations: int
    multiplier_estimates: dict[str, np.ndarray]
    converged: bool
    mu: float
    history: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "objective_value": self.objective_value,
            "kkt_residual": self.kkt_residual,
            "feasibility_residual": self.feasibility_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "barrier_mu": self.mu,
        }


# ---------------------------------------------------------------------------
# feasible starting points
# ---------------------------------------------------------------------------


def _level_rhs(constraints: ConstraintSystem) -> np.ndarray:
    rhs = np.full(constraints.grid.n_t + 1, np.nan)
    for row in constraints.by_label("balance"):
        rhs[row.level] = row.rhs
    return rhs


def _solve_monotone(fun, target, lo, hi, what):
    """Root of a nonincreasing ``fun(s) = target``, widening the bracket."""
    for _ in range(60):
        if fun(lo) >= target >= fun(hi):
            break
        lo, hi = 2 * lo, 2 * hi
    else:
        raise InfeasibleConstraintsError(f"balance row unattainable by {what}")
    if fun(lo) == target:
        return lo
    if fun(hi) == target:
        return hi
    return brentq(lambda s: fun(s) - target, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)


def _balance_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.n_x + 1, grid.h_x)
    w[[0, -1]] *= 0.5
    return w


def feasible_start(
    constraints: ConstraintSystem,
    theta: float = 0.05,
    base_density: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Point satisfying every equality row, strictly monotone off the forced nodes.

    Per level, the density of the translated ``M0`` (shift chosen to hit the
    balance row) is restricted to the cells that may carry mass, blended
    with a uniform density of weight ``theta`` and then exponentially tilted
    until the balance row holds exactly.
    """
    grid = constraints.grid
    x, M0, hx = grid.x, constraints.M0, grid.h_x
    w = _balance_weights(grid)
    rhs = _level_rhs(constraints)
    xmid = 0.5 * (x[1:] + x[:-1])
    fixed, vals = constraints.forced_values()
    if base_density is not None and np.any(base_density < 0):
        raise DomainError("base density must be nonnegative")
    if not 0 < theta <= 1:
        raise DomainError("theta must lie in (0, 1]")

    def shifted(s):
        row = np.interp(x - s, x, M0, left=0.0, right=1.0)
        row[0], row[-1] = 0.0, 1.0
        return row

    phi = vals.copy()
    for i in range(1, grid.n_t + 1):
        target = rhs[i]
        live = ~(fixed[i, :-1] & fixed[i, 1:])
        if base_density is None:
            s = _solve_monotone(lambda s: w @ shifted(s), target, -2 * grid.R, 2 * grid.R, "translation")
            dens = np.diff(shifted(s)) / hx
        else:
            dens = np.asarray(base_density[i - 1], dtype=float)
        dens = np.where(live, dens, 0.0)
        total = dens.sum() * hx
        dens = (1 - theta) * (dens / total if total > 0 else 0.0) + theta * live / (live.sum() * hx)
        lo = vals[i, 0]

        def row_for(beta):
            e = np.where(live, beta * xmid, -np.inf)
            p = dens * np.exp(e - e[live].max())
            p /= p.sum() * hx
            row = lo + np.concatenate([[0.0], np.cumsum(p * hx)])
            row[fixed[i]] = vals[i, fixed[i]]
            return row

        beta = _solve_monotone(lambda b: w @ row_for(b), target, -10.0 / grid.R, 10.0 / grid.R, "tilting")
        phi[i] = row_for(beta)
    return project_equalities(phi, constraints)


def project_equalities(phi: np.ndarray, constraints: ConstraintSystem) -> np.ndarray:
    """Re-pin forced nodes and remove balance residuals by a level-wise shift."""
    fixed, vals = constraints.forced_values()
    return project_equalities_with(phi, constraints, fixed, vals)


# ---------------------------------------------------------------------------
# barrier Newton
# ---------------------------------------------------------------------------


class _Reduced:
    """Objective, barrier and balance rows restricted to the non-fixed nodes."""

    def __init__(self, objective: DiscreteObjective, constraints: ConstraintSystem,
                 fixed: Optional[np.ndarray] = None, vals: Optional[np.ndarray] = None):
        if fixed is None:
            fixed, vals = constraints.forced_values()
        self.obj = objective.exact()
        self.cons = constraints
        g = objective.grid
        self.grid = g
        self.area = g.cell_area
        self.fixed = fixed
        self.vals = vals
        self.free = ~fixed.ravel()
        self.free_idx = np.flatnonzero(self.free)
        Dt, Dx = difference_operators(g)
        self.Dt_full = Dt
        self.Dx_full = Dx
        ncell = g.n_t * g.n_x
        self.Dt = Dt[:, self.free_idx].tocsr()
        self.Dx_obj = Dx[:ncell][:, self.free_idx].tocsr()
        # barrier only where D_x phi involves a free node
        mono = constraints.monotone_mask & ~(fixed[:, :-1] & fixed[:, 1:])
        self.mono_rows = np.flatnonzero(mono.ravel())
        self.Dx_bar = Dx[self.mono_rows][:, self.free_idx].tocsr()
        A, b = constraints.matrix()
        labels = np.array([r.label for r in constraints.rows])
        bal = labels == "balance"
        base = vals.ravel()
        self.B = A[bal][:, self.free_idx].tocsr()
        self.b = b[bal] - A[bal][:, ~self.free] @ base[~self.free]
        self.base = base
        self.base_c = 1.0 - base

    def full(self, v: np.ndarray) -> np.ndarray:
        phi = self.base.copy()
        phi[self.free_idx] = v
        return phi.reshape(self.grid.shape)

    def field(self, it: "_Iterate") -> PotentialField:
        psi = self.base_c.copy()
        psi[self.free_idx] = it.vc
        return PotentialField(self.full(it.v), self.grid, psi.reshape(self.grid.shape))

    def start(self, phi0: PotentialField | np.ndarray) -> "_Iterate":
        if isinstance(phi0, PotentialField):
            phi, psi = phi0.phi, phi0.complement
        else:
            phi, psi = np.asarray(phi0, dtype=float), None
        v = phi.ravel()[self.free_idx].copy()
        vc = 1.0 - v if psi is None else psi.ravel()[self.free_idx].copy()
        return _Iterate(v, vc)

    def y_barrier(self, phi: PotentialField | np.ndarray) -> np.ndarray:
        if not isinstance(phi, PotentialField):
            phi = PotentialField(phi, self.grid)
        return phi.dx.ravel()[self.mono_rows]

    def barrier_value(self, it: "_Iterate", mu: float) -> tuple[float, float]:
        phi = self.field(it)
        y = self.y_barrier(phi)
        if np.any(y <= 0):
            return np.inf, np.inf
        f = self.obj.value(phi)
        return f - mu * self.area * np.sum(np.log(y)), f

    def gradient(self, it: "_Iterate", mu: float) -> np.ndarray:
        phi = self.field(it)
        g = self.obj.gradient(phi).ravel()[self.free_idx]
        y = self.y_barrier(phi)
        return g - mu * self.area * (self.Dx_bar.T @ (1.0 / y))

    def hessian(self, it: "_Iterate", mu: float) -> sp.csc_matrix:
        phi = self.field(it)
        Lzz, Lzy, Lyy = (a.ravel() * self.area for a in self.obj.hessian_weights(phi))
        y = self.y_barrier(phi)
        Dt, Dx = self.Dt, self.Dx_obj
        H = (Dt.T @ sp.diags(Lzz) @ Dt
             + Dt.T @ sp.diags(Lzy) @ Dx
             + Dx.T @ sp.diags(Lzy) @ Dt
             + Dx.T @ sp.diags(Lyy) @ Dx
             + self.Dx_bar.T @ sp.diags(mu * self.area / y**2) @ self.Dx_bar)
        return H.tocsc()

    def level_multipliers(self, grad: np.ndarray) -> np.ndarray:
        """Least-squares balance multipliers: rows are disjoint constant blocks."""
        B = self.B
        norms = np.asarray(B.multiply(B).sum(axis=1)).ravel()
        return np.divide(B @ grad, norms, out=np.zeros(B.shape[0]), where=norms > 0)

    def projected_gradient(self, grad: np.ndarray) -> np.ndarray:
        return grad - self.B.T @ self.level_multipliers(grad)


@dataclass(frozen=True)
class _Iterate:
    """Free node values ``v`` and their complements ``1 - v``, moved in lockstep."""

    v: np.ndarray
    vc: np.ndarray

    def moved(self, step: float, d: np.ndarray) -> "_Iterate":
        return _Iterate(self.v + step * d, self.vc - step * d)


def _newton_direction(H, B, grad, residual, refine: int = 4):
    """Solve the equality-constrained Newton system.

    Barrier terms make the Hessian diagonal span many decades, so the KKT
    matrix is symmetrically equilibrated before factorisation and the
    solution polished by iterative refinement.
    """
    n = H.shape[0]
    d = np.sqrt(np.maximum(np.abs(H.diagonal()), 1e-300))
    Ds = sp.diags(1.0 / d)
    Bs = B @ Ds
    rb = np.sqrt(np.asarray(Bs.multiply(Bs).sum(axis=1)).ravel())
    rb = np.where(rb > 0, rb, 1.0)
    Es = sp.diags(1.0 / rb)
    K = sp.bmat([[Ds @ H @ Ds, (Es @ Bs).T], [Es @ Bs, None]], format="csc")
    rhs = np.concatenate([-grad / d, -residual / rb])
    lu = spla.splu(K)
    sol = lu.solve(rhs)
    for _ in range(refine):
        r = rhs - K @ sol
        if np.max(np.abs(r)) <= 1e-15 * max(1.0, np.max(np.abs(rhs))):
            break
        sol += lu.solve(r)
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("singular KKT system")
    return sol[:n] / d, sol[n:] / rb


def _center(red: _Reduced, it: _Iterate, mu: float, tol: float, config: SolverConfig,
            history: list, outer: int) -> tuple[_Iterate, float, int]:
    """Damped Newton on the barrier subproblem at fixed ``mu``.

    Returns the iterate, its projected-gradient sup norm and the number
    of Newton steps taken.
    """
    recent: list[tuple[float, float]] = []
    steps = 0
    pg = np.inf
    for inner in range(config.max_inner):
        phi_b, f = red.barrier_value(it, mu)
        grad = red.gradient(it, mu)
        res = red.B @ it.v - red.b
        pg_vec = red.projected_gradient(grad)
        pg = np.max(np.abs(pg_vec))
        history.append({"outer": outer, "inner": inner, "mu": mu, "barrier": float(phi_b),
                        "objective": float(f), "stationarity": float(pg),
                        "infeasibility": float(np.max(np.abs(res), initial=0.0))})
        feasible = history[-1]["infeasibility"] <= 0.1 * config.tol_feas
        if feasible:
            recent.append((phi_b, pg))
        if pg <= tol and feasible:
            break
        if feasible and len(recent) > config.stall_window:
            # stalled: the barrier value is flat and no recent step cut the gradient norm by a quarter
            window = recent[-config.stall_window - 1:]
            flat = window[0][0] - phi_b < config.stall_tol
            if flat and all(b[1] > 0.75 * a[1] for a, b in zip(window, window[1:])):
                break
        d, _ = _newton_direction(red.hessian(it, mu), red.B, grad, res)
        steps += 1
        y = red.y_barrier(red.field(it))
        dy = red.Dx_bar @ d
        neg = dy < 0
        step = min(1.0, 0.995 * np.min(-y[neg] / dy[neg])) if neg.any() else 1.0
        # rounding can still close a gap the step was meant to keep open
        while step > 1e-14 and np.any(red.y_barrier(red.field(it.moved(step, d))) <= 0):
            step *= 0.5
        if feasible:
            slope = grad @ d
            pg_now = np.max(np.abs(pg_vec))
            while step > 1e-14:
                trial, _ = red.barrier_value(it.moved(step, d), mu)
                if trial <= phi_b + 1e-4 * step * slope:
                    break
                # below roundoff in the barrier value, fall back on the gradient norm
                if np.isfinite(trial) and abs(trial - phi_b) <= 1e-13 * max(1.0, abs(phi_b)):
                    g_trial = red.gradient(it.moved(step, d), mu)
                    if np.max(np.abs(red.projected_gradient(g_trial))) < pg_now:
                        break
                step *= 0.5
            else:
                break
        it = it.moved(step, d)
        history[-1]["step"] = float(step)
    return it, float(pg), steps


def solve(
    objective: DiscreteObjective,
    constraints: ConstraintSystem,
    config: SolverConfig = SolverConfig(),
    warm_start: Optional[PotentialField | np.ndarray] = None,
) -> SolveReport:
    """Minimise the discrete objective over the discrete admissible set."""
    red = _Reduced(objective, constraints)
    if warm_start is None:
        phi0 = feasible_start(constraints, theta=config.start_theta)
    else:
        phi0 = warm_start.phi if isinstance(warm_start, PotentialField) else np.asarray(warm_start, float)
        phi0 = project_equalities(phi0, constraints)
    it = red.start(phi0)
    if np.any(red.y_barrier(red.field(it)) <= 0):
        raise DomainError("warm start must be strictly increasing in x off the forced nodes")

    mu = config.barrier_mu0
    history: list[dict] = []
    total_iter = 0
    prev = None
    for outer in range(config.max_outer):
        final_stage = mu <= config.mu_final * (1 + 1e-12)
        prev = red.field(it)
        tol = config.tol_kkt * (0.1 if final_stage else 1.0)
        it, pg, steps = _center(red, it, mu, tol, config, history, outer)
        total_iter += steps
        if final_stage:
            break
        mu = max(mu * config.barrier_shrink, config.mu_final)

    phi = red.field(it)
    duals = _barrier_duals(red, phi, mu)
    kkt = kkt_residual(phi, objective, constraints, duals)
    if config.snap_tol > 0:
        polished = _crossover(objective, constraints, red, it, prev, mu, config, history, max(kkt, config.tol_kkt))
        if polished is not None:
            phi, duals, kkt = polished

    res = constraints.residuals(phi.phi)
    feas = max(res.values())
    converged = kkt <= config.tol_kkt and feas <= config.tol_feas
    if not converged:
        log.warning("solver stopped without meeting tolerances (kkt=%.3g, feas=%.3g)", kkt, feas)
    return SolveReport(
        phi_star=phi,
        objective_value=objective.value(phi),
        kkt_residual=kkt,
        feasibility_residual=feas,
        iterations=total_iter,
        multiplier_estimates=duals,
        converged=bool(converged),
        mu=mu,
        history=history,
    )


def _crossover(objective: DiscreteObjective, constraints: ConstraintSystem, red: _Reduced, it: _Iterate,
               prev: PotentialField, mu: float, config: SolverConfig, history: list, kkt_bar: float):
    """Snap nodes heading for 0 or 1 onto the bound and re-centre.

    Where the exact minimiser has empty cells the barrier keeps them open
    by about ``sqrt(mu)``.  A node is taken to be heading for a bound when
    its distance to it is below ``snap_tol`` and shrank by more than
    ``SNAP_RATIO`` over the last barrier stage (``prev``); genuinely small
    values barely move.  The result is returned only if it is feasible, no
    worse in objective and its KKT residual in the original problem is at
    most ``kkt_bar``.  Returns ``(field, duals, kkt)`` or ``None``.
    """
    phi = red.field(it)
    free = ~red.fixed
    low = free & (phi.phi <= config.snap_tol) & (phi.phi < SNAP_RATIO * prev.phi)
    high = free & (phi.complement <= config.snap_tol) & (phi.complement < SNAP_RATIO * prev.complement)
    if not (low.any() or high.any()):
        return None
    vals = red.vals.copy()
    vals[low], vals[high] = 0.0, 1.0
    try:
        fixed, vals = close_fixed(red.grid, red.fixed | low | high, vals)
    except InfeasibleConstraintsError:
        return None
    red2 = _Reduced(objective, constraints, fixed, vals)
    if red2.free_idx.size == 0 or np.any(np.asarray(red2.B.sum(axis=1)).ravel() == 0):
        return None
    start = red.full(it.v)
    start[fixed] = vals[fixed]
    start = project_equalities_with(start, constraints, fixed, vals)
    psi = 1.0 - start
    psi[~fixed] = phi.complement[~fixed] - (start[~fixed] - phi.phi[~fixed])
    it2 = red2.start(PotentialField(start, red.grid, psi))
    if np.any(red2.y_barrier(red2.field(it2)) <= 0):
        return None
    # cheap screen before re-centring: a wrong snap shows up at once
    pre = red2.field(it2)
    screen = kkt_residual(pre, objective, constraints, _barrier_duals(red2, pre, mu), max_iter=SCREEN_ITER)
    if screen > SCREEN_FACTOR * config.tol_kkt:
        history.append({"crossover_nodes": int((fixed & ~red.fixed).sum()), "crossover_screen": float(screen),
                        "crossover_accepted": False})
        return None
    n_hist = len(history)
    it2, _, _ = _center(red2, it2, mu, 0.1 * config.tol_kkt, config, history, -1)
    phi2 = red2.field(it2)
    feas = max(constraints.residuals(phi2.phi).values())
    f_old, f_new = objective.value(phi), objective.value(phi2)
    duals = _barrier_duals(red2, phi2, mu)
    kkt = kkt_residual(phi2, objective, constraints, duals)
    accepted = (feas <= config.tol_feas and kkt <= kkt_bar
                and f_new <= f_old + config.tol_kkt * max(1.0, abs(f_old)))
    best = (phi2, duals, kkt) if accepted else None
    # with the empty cells pinned the barrier can shrink further without stiffening
    for _ in range(POLISH_STAGES if accepted else 0):
        mu *= config.barrier_shrink
        it3, _, _ = _center(red2, it2, mu, min(mu, 0.1 * config.tol_kkt), config, history, -1)
        phi3 = red2.field(it3)
        duals3 = _barrier_duals(red2, phi3, mu)
        kkt3 = kkt_residual(phi3, objective, constraints, duals3)
        if (max(constraints.residuals(phi3.phi).values()) > config.tol_feas or kkt3 > kkt_bar
                or objective.value(phi3) > objective.value(best[0]) + config.tol_kkt * max(1.0, abs(f_old))):
            break
        it2, best = it3, (phi3, duals3, kkt3)
    for h in history[n_hist:]:
        h["crossover"] = True
    history.append({"crossover_nodes": int((fixed & ~red.fixed).sum()), "crossover_kkt": float(kkt),
                    "crossover_accepted": bool(accepted)})
    return best


def project_equalities_with(phi: np.ndarray, constraints: ConstraintSystem, fixed: np.ndarray,
                            vals: np.ndarray) -> np.ndarray:
    """Level-wise shift of the nodes outside ``fixed`` that removes the balance residuals."""
    phi = np.array(phi, dtype=float)
    phi[fixed] = vals[fixed]
    res = constraints.balance_residual(phi)
    w = _balance_weights(constraints.grid)
    for i in range(1, constraints.grid.n_t + 1):
        free = ~fixed[i]
        if free.any():
            phi[i, free] -= res[i - 1] / w[free].sum()
    return phi


def _barrier_duals(red: _Reduced, phi: PotentialField, mu: float) -> dict:
    """Multipliers implied by a centred barrier iterate.

    ``monotone`` is indexed like the monotone mask; ``cell_z`` holds ``L_z``
    on every objective cell.
    """
    g = red.grid
    y = red.y_barrier(phi)
    lam = np.zeros((g.n_t + 1) * g.n_x)
    lam[red.mono_rows] = mu * red.area / y
    grad_f = red.obj.gradient(phi).ravel()[red.free_idx]
    nu = red.level_multipliers(grad_f - red.Dx_bar.T @ lam[red.mono_rows])
    Lz, _ = red.obj.masked_partials(phi)
    return {"balance": nu, "monotone": lam.reshape(g.n_t + 1, g.n_x), "cell_z": Lz}


def kkt_residual(
    phi: np.ndarray | PotentialField,
    objective: DiscreteObjective,
    constraints: ConstraintSystem,
    duals: Optional[dict[str, np.ndarray]] = None,
    _debug: Optional[dict] = None,
    max_iter: int = 5000,
) -> float:
    """Sup-norm KKT residual at ``phi``.

    Free variables are the nodes not fixed by the equality rows or by the
    finite-objective requirement.  Cells at the exact ``(0, 0)`` corner of
    the perspective are nonsmooth; there the subgradient ``(a, b)`` must
    satisfy ``b + H(a) <= 0``, with ``a`` taken from ``duals["cell_z"]``
    (zero when absent) and ``b`` fitted by bounded least squares together
    with the balance multipliers and the monotone multipliers of empty
    cells.  Multipliers of nonempty cells come from ``duals["monotone"]``
    or are fitted as well.  The figure is the largest of the projected
    Lagrangian gradient, the complementarity products ``lambda * D_x phi``
    and any negative monotone multiplier.
    """
    if not isinstance(phi, PotentialField):
        phi = PotentialField(phi, objective.grid)
    red = _Reduced(objective, constraints)
    g = red.grid
    area = red.area
    grad = red.obj.gradient(phi).ravel()[red.free_idx]

    z, yc = red.obj.differences(phi)
    corner = ((z == 0) & (yc == 0)).ravel()
    touches = (abs(red.Dt_full[:, red.free_idx]).sum(axis=1).A1 > 0) | (abs(red.Dx_obj).sum(axis=1).A1 > 0)
    corner_cells = np.flatnonzero(corner & touches)
    a = np.zeros(corner_cells.size)
    if duals is not None and "cell_z" in duals:
        a = np.asarray(duals["cell_z"], dtype=float).ravel()[corner_cells]
    Dt_c = red.Dt[corner_cells]
    Dx_c = red.Dx_obj[corner_cells]
    grad = grad + area * (Dt_c.T @ a)

    y = red.y_barrier(phi)
    ncell = g.n_t * g.n_x
    rows = red.mono_rows
    merged = np.isin(rows, corner_cells) & (rows < ncell)  # lambda absorbed into b
    zero = (y == 0) & ~merged
    pos = y > 0
    Dz = red.Dx_bar[np.flatnonzero(zero)]
    Dp = red.Dx_bar[np.flatnonzero(pos)]

    cols = [-red.B.T, area * Dx_c.T, -Dz.T]
    nb, nc, nz = red.B.shape[0], corner_cells.size, Dz.shape[0]
    lower = [np.full(nb, -np.inf), np.full(nc, -np.inf), np.zeros(nz)]
    upper = [np.full(nb, np.inf), -np.asarray(objective.cost.H(a), dtype=float), np.full(nz, np.inf)]
    if duals is not None and "monotone" in duals:
        lam_pos = np.asarray(duals["monotone"], dtype=float).ravel()[rows[pos]]
        target = -(grad - Dp.T @ lam_pos)
        fit_pos = False
    else:
        cols.append(-Dp.T)
        lower.append(np.zeros(Dp.shape[0]))
        upper.append(np.full(Dp.shape[0], np.inf))
        target = -grad
        fit_pos = True
    M = sp.hstack(cols).tocsr()
    lb, ub = np.concatenate(lower), np.concatenate(upper)
    if M.shape[1]:
        # iterates stay within the bounds, so a truncated fit only overstates the residual
        fit = lsq_linear(M, target, bounds=(lb, ub), lsmr_tol="auto", tol=1e-13, max_iter=max_iter)
        x = fit.x
    else:
        x = np.zeros(0)
    if fit_pos:
        lam_pos = x[nb + nc + nz:]
    stat = (M @ x - target) if M.shape[1] else -target
    parts = [np.max(np.abs(stat), initial=0.0)]
    if lam_pos.size:
        parts.append(np.max(np.abs(lam_pos * y[pos])))
        parts.append(max(0.0, -lam_pos.min()))
    if _debug is not None:
        _debug.update(stat=stat, free_idx=red.free_idx, corner_cells=corner_cells, a=a,
                      b=x[nb:nb + nc], parts=parts)
    return float(max(parts))
