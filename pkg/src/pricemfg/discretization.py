"""Finite-difference discretisation of the potential problem.

Nodes are indexed ``(i, j)`` with ``t_i = i h_t`` and ``x_j = -R + j h_x``.
Cells ``(i, j)`` with ``i < n_t`` and ``j < n_x`` carry the forward
differences ``z = D_t phi`` and ``y = D_x phi`` and the integrand
``L(z, y) - V(x_j) y - u_T'(x_j) z`` weighted by ``h_x h_t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .cost import CostModel, perspective
from .errors import ConstraintAssemblyError, DomainError, InfeasibleConstraintsError
from .problem import ProblemInstance, cumulative_density

EPS_DEGENERATE = 1e-9

LABELS = ("initial", "left_boundary", "right_boundary", "balance", "monotone")


@dataclass(frozen=True)
class Grid:
    T: float
    R: float
    n_t: int
    n_x: int

    def __post_init__(self):
        if not (self.T > 0 and self.R > 0):
            raise DomainError("grid needs T > 0 and R > 0")
        if self.n_t < 1 or self.n_x < 2:
            raise DomainError("grid needs n_t >= 1 and n_x >= 2")

    @property
    def h_t(self) -> float:
        return self.T / self.n_t

    @property
    def h_x(self) -> float:
        return 2.0 * self.R / self.n_x

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_t + 1, self.n_x + 1)

    @property
    def cell_area(self) -> float:
        return self.h_t * self.h_x

    @cached_property
    def t(self) -> np.ndarray:
        return np.arange(self.n_t + 1) * self.h_t

    @cached_property
    def x(self) -> np.ndarray:
        return -self.R + np.arange(self.n_x + 1) * self.h_x

    def node(self, i: int, j: int) -> int:
        return i * (self.n_x + 1) + j

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.T, self.R, self.n_t * factor, self.n_x * factor)


@dataclass
class PotentialField:
    """Grid values of ``phi``, optionally with the complement ``1 - phi``.

    Where ``phi`` is close to one, its differences lose digits to rounding;
    when ``complement`` is given it is carried with full relative precision
    and differences between nodes that both exceed one half are taken from it.
    """

    phi: np.ndarray
    grid: Grid
    complement: Optional[np.ndarray] = None

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.shape != self.grid.shape:
            raise DomainError(f"phi has shape {self.phi.shape}, grid expects {self.grid.shape}")
        if self.complement is not None:
            self.complement = np.asarray(self.complement, dtype=float)
            if self.complement.shape != self.grid.shape:
                raise DomainError("complement must have the shape of phi")

    @property
    def dt(self) -> np.ndarray:
        """Forward time differences on cells, shape ``(n_t, n_x)``."""
        return dt_cells(self.phi, self.grid, self.complement)

    @property
    def dx(self) -> np.ndarray:
        """Forward space differences on every level, shape ``(n_t + 1, n_x)``."""
        return dx_levels(self.phi, self.grid, self.complement)


def _near_one(psi: np.ndarray) -> np.ndarray:
    return psi < 0.5


def dt_cells(phi: np.ndarray, grid: Grid, complement: Optional[np.ndarray] = None) -> np.ndarray:
    z = (phi[1:, :-1] - phi[:-1, :-1]) / grid.h_t
    if complement is not None:
        hi = _near_one(complement[1:, :-1]) & _near_one(complement[:-1, :-1])
        z[hi] = ((complement[:-1, :-1] - complement[1:, :-1]) / grid.h_t)[hi]
    return z


def dx_levels(phi: np.ndarray, grid: Grid, complement: Optional[np.ndarray] = None) -> np.ndarray:
    y = np.diff(phi, axis=1) / grid.h_x
    if complement is not None:
        hi = _near_one(complement[:, 1:]) & _near_one(complement[:, :-1])
        y[hi] = (-np.diff(complement, axis=1) / grid.h_x)[hi]
    return y


def dx_cells(phi: np.ndarray, grid: Grid, complement: Optional[np.ndarray] = None) -> np.ndarray:
    return dx_levels(phi, grid, complement)[:-1]


def forward_dt(field: PotentialField, i: int, j: int) -> float:
    g = field.grid
    assert 0 <= i < g.n_t and 0 <= j < g.n_x, "cell index out of range"
    return (field.phi[i + 1, j] - field.phi[i, j]) / g.h_t


def forward_dx(field: PotentialField, i: int, j: int) -> float:
    g = field.grid
    assert 0 <= i <= g.n_t and 0 <= j < g.n_x, "cell index out of range"
    return (field.phi[i, j + 1] - field.phi[i, j]) / g.h_x


def difference_operators(grid: Grid) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse ``(D_t, D_x)`` mapping flattened nodes to flattened values.

    ``D_t`` has one row per objective cell (``n_t * n_x``); ``D_x`` has one
    row per monotonicity cell on every level (``(n_t + 1) * n_x``).
    """
    nt, nx = grid.n_t, grid.n_x
    ii, jj = np.meshgrid(np.arange(nt), np.arange(nx), indexing="ij")
    rows = np.arange(nt * nx)
    lo = (ii * (nx + 1) + jj).ravel()
    up = ((ii + 1) * (nx + 1) + jj).ravel()
    n_nodes = (nt + 1) * (nx + 1)
    Dt = sp.csr_matrix(
        (np.r_[np.full(rows.size, 1.0), np.full(rows.size, -1.0)] / grid.h_t,
         (np.r_[rows, rows], np.r_[up, lo])),
        shape=(nt * nx, n_nodes),
    )
    ii, jj = np.meshgrid(np.arange(nt + 1), np.arange(nx), indexing="ij")
    rows = np.arange((nt + 1) * nx)
    left = (ii * (nx + 1) + jj).ravel()
    Dx = sp.csr_matrix(
        (np.r_[np.full(rows.size, 1.0), np.full(rows.size, -1.0)] / grid.h_x,
         (np.r_[rows, rows], np.r_[left + 1, left])),
        shape=((nt + 1) * nx, n_nodes),
    )
    return Dt, Dx


class DiscreteObjective:
    """Discrete functional ``I[phi]`` with exact gradient and Hessian.

    Calling the object returns ``(value, gradient)``; ``value`` is ``inf``
    when some cell has ``y < 0`` or ``y == 0`` with ``z != 0``.
    """

    def __init__(self, cost: CostModel, grid: Grid, V_cells: np.ndarray, uT_prime_cells: np.ndarray,
                 eps_deg: float = EPS_DEGENERATE):
        V_cells = np.asarray(V_cells, dtype=float)
        uT_prime_cells = np.asarray(uT_prime_cells, dtype=float)
        if V_cells.shape != (grid.n_x,) or uT_prime_cells.shape != (grid.n_x,):
            raise DomainError("coefficients must hold one value per space cell")
        self.cost = cost
        self.grid = grid
        self.V_cell = np.broadcast_to(V_cells, (grid.n_t, grid.n_x))
        self.g_cell = np.broadcast_to(uT_prime_cells, (grid.n_t, grid.n_x))
        self.eps_deg = eps_deg

    def differences(self, phi: np.ndarray | PotentialField) -> tuple[np.ndarray, np.ndarray]:
        if isinstance(phi, PotentialField):
            return phi.dt, phi.dx[:-1]
        return dt_cells(phi, self.grid), dx_cells(phi, self.grid)

    def exact(self) -> "DiscreteObjective":
        """Copy whose only corner cells are exact ``y = z = 0``.

        Smooth on the interior ``y > 0``; the solver works with this copy so
        that the degenerate-cell width cannot switch cells on and off.
        """
        out = DiscreteObjective.__new__(DiscreteObjective)
        out.__dict__.update(self.__dict__)
        out.eps_deg = 0.0
        return out

    def _classify(self, z, y):
        """Cells treated as the ``L(0, 0) = 0`` corner, and infeasible cells."""
        if self.eps_deg == 0:
            corner = (y == 0) & (z == 0)
        else:
            corner = (y < self.eps_deg) & (y >= 0) & (np.abs(z) < self.eps_deg)
        bad = (y < 0) | ((y <= 0) & ~corner)
        return corner, bad

    def cell_values(self, phi: np.ndarray) -> np.ndarray:
        z, y = self.differences(phi)
        corner, bad = self._classify(z, y)
        vals = np.zeros_like(z)
        live = ~corner & ~bad
        vals[live] = perspective(self.cost, z[live], y[live])
        vals[bad] = np.inf
        return vals - self.V_cell * y - self.g_cell * z

    def value(self, phi: np.ndarray) -> float:
        vals = self.cell_values(phi)
        if not np.all(np.isfinite(vals)):
            return float("inf")
        return float(vals.sum() * self.grid.cell_area)

    def masked_partials(self, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(L_z, L_y)`` on cells, zero on degenerate cells."""
        z, y = self.differences(phi)
        live = y > 0
        Lz = np.zeros_like(z)
        Ly = np.zeros_like(z)
        r = z[live] / y[live]
        Lz[live] = self.cost.dF(r)
        Ly[live] = self.cost.F(r) - r * self.cost.dF(r)
        corner, _ = self._classify(z, y)
        Lz[corner] = 0.0
        Ly[corner] = 0.0
        return Lz, Ly

    def gradient(self, phi: np.ndarray) -> np.ndarray:
        g = self.grid
        Lz, Ly = self.masked_partials(phi)
        cz = (Lz - self.g_cell) * g.h_x  # times h_x h_t / h_t
        cy = (Ly - self.V_cell) * g.h_t
        grad = np.zeros(g.shape)
        grad[1:, :-1] += cz
        grad[:-1, :-1] -= cz
        grad[:-1, 1:] += cy
        grad[:-1, :-1] -= cy
        return grad

    def hessian_weights(self, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-cell ``(L_zz, L_zy, L_yy)`` at interior cells (``y > 0``)."""
        z, y = self.differences(phi)
        live = y > 0
        r = np.zeros_like(z)
        r[live] = z[live] / y[live]
        f2 = np.zeros_like(z)
        f2[live] = self.cost.d2F(r[live]) / y[live]
        return f2, -r * f2, r * r * f2

    def __call__(self, phi: np.ndarray) -> tuple[float, np.ndarray]:
        val = self.value(phi)
        if not np.isfinite(val):
            return val, np.full(self.grid.shape, np.nan)
        return val, self.gradient(phi)


SAMPLING_RULES = ("node", "midpoint")


def assemble_objective(instance: ProblemInstance, grid: Grid, v_sampling: str = "node") -> DiscreteObjective:
    """Discrete objective on ``grid``.

    ``v_sampling`` places the potential ``V`` that multiplies ``D_x phi`` on
    cell ``j``: ``node`` samples ``V(x_j)`` (lower-left node, like every
    other cell quantity) and ``midpoint`` samples ``V(x_j + h_x / 2)``, the
    centre of the interval on which ``D_x phi`` is the density.  ``u_T'``
    multiplies ``D_t phi``, which lives on the node ``x_j``, and is always
    sampled there.
    """
    if abs(grid.R - instance.R) > 1e-12 or abs(grid.T - instance.T) > 1e-12:
        raise DomainError("grid is inconsistent with the instance radius or horizon")
    if v_sampling not in SAMPLING_RULES:
        raise DomainError(f"unknown potential sampling rule {v_sampling!r}")
    xs = grid.x[:-1] + (0.5 * grid.h_x if v_sampling == "midpoint" else 0.0)
    return DiscreteObjective(instance.cost, grid, instance.V(xs), instance.uT_prime(grid.x[:-1]))


@dataclass(frozen=True)
class EqualityRow:
    label: str
    nodes: np.ndarray
    coeffs: np.ndarray
    rhs: float
    level: int


@dataclass
class ConstraintSystem:
    """Linear description of the discrete admissible set."""

    grid: Grid
    rows: list[EqualityRow]
    monotone_mask: np.ndarray  # (n_t + 1, n_x) cells with D_x phi >= 0 imposed
    M0: np.ndarray
    balance_target: np.ndarray  # cumulative supply per level, index 0 unused
    time_rule: str = "rectangle"
    _matrix: tuple | None = field(default=None, repr=False)

    def by_label(self, label: str) -> list[EqualityRow]:
        return [r for r in self.rows if r.label == label]

    def counts(self) -> dict[str, int]:
        out = {lab: 0 for lab in LABELS}
        for r in self.rows:
            out[r.label] += 1
        out["monotone"] = int(self.monotone_mask.sum())
        return out

    def matrix(self) -> tuple[sp.csr_matrix, np.ndarray]:
        if self._matrix is None:
            n_nodes = self.grid.shape[0] * self.grid.shape[1]
            rr, cc, vv = [], [], []
            for k, row in enumerate(self.rows):
                rr.append(np.full(row.nodes.size, k))
                cc.append(row.nodes)
                vv.append(row.coeffs)
            A = sp.csr_matrix((np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))),
                              shape=(len(self.rows), n_nodes))
            b = np.array([r.rhs for r in self.rows])
            self._matrix = (A, b)
        return self._matrix

    def residuals(self, phi: np.ndarray) -> dict[str, float]:
        """Max absolute residual per label; ``monotone`` is the worst violation."""
        A, b = self.matrix()
        res = A @ np.asarray(phi, dtype=float).ravel() - b
        out = {}
        labels = np.array([r.label for r in self.rows])
        for lab in LABELS[:-1]:
            sel = labels == lab
            out[lab] = float(np.max(np.abs(res[sel]))) if sel.any() else 0.0
        dx = np.diff(phi, axis=1) / self.grid.h_x
        out["monotone"] = float(max(0.0, -dx[self.monotone_mask].min()))
        return out

    def balance_residual(self, phi: np.ndarray) -> np.ndarray:
        """Signed balance residual for levels ``1..n_t``."""
        A, b = self.matrix()
        res = A @ np.asarray(phi, dtype=float).ravel() - b
        return np.array([res[k] for k, r in enumerate(self.rows) if r.label == "balance"])

    @property
    def free_mask(self) -> np.ndarray:
        """Nodes not pinned by initial or boundary rows."""
        mask = np.ones(self.grid.shape, dtype=bool)
        mask[0, :] = False
        mask[:, 0] = False
        mask[:, -1] = False
        return mask

    def pinned_values(self) -> np.ndarray:
        phi = np.zeros(self.grid.shape)
        phi[0, :] = self.M0
        phi[1:, -1] = 1.0
        return phi

    def forced_values(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes whose value every finite-objective admissible point shares.

        A cell whose two lower nodes are fixed to the same value has
        ``y = 0``, so a finite integrand needs ``z = 0`` and the node above
        inherits the value.  Monotonicity then fixes everything between two
        fixed nodes of equal value on a level.  Returns ``(mask, values)``.
        """
        return close_fixed(self.grid, ~self.free_mask, self.pinned_values())


def close_fixed(grid: Grid, fixed: np.ndarray, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smallest superset of ``fixed`` closed under the flat-cell and sandwich rules."""
    fixed = np.array(fixed, dtype=bool)
    vals = np.array(vals, dtype=float)
    for i in range(grid.n_t):
        flat = fixed[i, :-1] & fixed[i, 1:] & (vals[i, :-1] == vals[i, 1:])
        for j in np.flatnonzero(flat):
            if fixed[i + 1, j] and vals[i + 1, j] != vals[i, j]:
                raise InfeasibleConstraintsError(
                    f"node ({i + 1}, {j}) is pinned to {vals[i + 1, j]} but a flat cell forces {vals[i, j]}")
            fixed[i + 1, j] = True
            vals[i + 1, j] = vals[i, j]
        row = np.flatnonzero(fixed[i + 1])
        for v in np.unique(vals[i + 1, row]):
            hits = row[vals[i + 1, row] == v]
            if hits.size > 1:
                lo, hi = hits.min(), hits.max()
                clash = fixed[i + 1, lo:hi + 1] & (vals[i + 1, lo:hi + 1] != v)
                if clash.any():
                    raise InfeasibleConstraintsError(f"level {i + 1} cannot be monotone with its fixed nodes")
                fixed[i + 1, lo:hi + 1] = True
                vals[i + 1, lo:hi + 1] = v
    return fixed, vals


def balance_sums(supply_Q: np.ndarray, q_cum: np.ndarray, h_t: float, rule: str) -> np.ndarray:
    """Right-hand side quadrature of ``int_0^t_i Q`` for every level.

    ``rectangle`` sums ``Q(t_k) h_t`` over ``k = 0..i``; ``trapezoid`` uses
    the trapezoid cumulative integral.
    """
    if rule == "rectangle":
        return np.cumsum(supply_Q) * h_t
    if rule == "trapezoid":
        return np.asarray(q_cum, dtype=float).copy()
    raise DomainError(f"unknown balance time rule {rule!r}")


def assemble_constraints(instance: ProblemInstance, grid: Grid, time_rule: str = "rectangle") -> ConstraintSystem:
    M0 = cumulative_density(instance.m0, grid)
    if abs(M0[0]) > 1e-10 or abs(M0[-1] - 1.0) > 1e-10:
        raise ConstraintAssemblyError("cumulative density does not run from 0 to 1 on the grid")
    Q = instance.supply.sample(grid.t)
    q_cum = instance.supply.cumulative(grid.t)
    target = balance_sums(Q, q_cum, grid.h_t, time_rule)

    nx = grid.n_x
    rows: list[EqualityRow] = []
    for j in range(nx + 1):
        rows.append(EqualityRow("initial", np.array([grid.node(0, j)]), np.array([1.0]), float(M0[j]), 0))
    w = np.full(nx + 1, grid.h_x)
    w[[0, -1]] *= 0.5
    offset = float(w @ M0)
    for i in range(1, grid.n_t + 1):
        rows.append(EqualityRow("left_boundary", np.array([grid.node(i, 0)]), np.array([1.0]), 0.0, i))
        rows.append(EqualityRow("right_boundary", np.array([grid.node(i, nx)]), np.array([1.0]), 1.0, i))
        nodes = grid.node(i, 0) + np.arange(nx + 1)
        rows.append(EqualityRow("balance", nodes, w.copy(), offset - float(target[i]), i))

    mono = np.ones((grid.n_t + 1, nx), dtype=bool)
    return ConstraintSystem(grid, rows, mono, M0, target, time_rule)


def translate_potential(instance: ProblemInstance, grid: Grid) -> np.ndarray:
    """``M0(x - q(t))`` on the grid, with ``M0`` linearly interpolated."""
    M0 = cumulative_density(instance.m0, grid)
    q = instance.supply.cumulative(grid.t)
    phi = np.empty(grid.shape)
    for i, qi in enumerate(q):
        phi[i] = np.interp(grid.x - qi, grid.x, M0, left=0.0, right=1.0)
    return phi
