"""Recover density, price and value function from an optimal potential.

Cell quantities live on the forward-difference cells ``(i, j)``, ``i < n_t``;
a cell row ``i`` stands for the time interval ``[t_i, t_{i+1}]``.  The
density on level ``i`` is ``D_x phi(i, .)`` for every level including ``T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discretization import PotentialField, SAMPLING_RULES
from .errors import DomainError
from .problem import ProblemInstance


def mask_threshold(h_x: float) -> float:
    return max(1e-6, h_x)


@dataclass(frozen=True)
class MaskedDerivatives:
    """``L_z`` and ``L_y`` on cells where the density exceeds ``eps_mask``, zero elsewhere."""

    Lz_star: np.ndarray
    Ly_star: np.ndarray
    mask: np.ndarray
    eps_mask: float

    @classmethod
    def build(cls, field_: PotentialField, instance: ProblemInstance,
              eps_mask: Optional[float] = None) -> "MaskedDerivatives":
        g = field_.grid
        eps = mask_threshold(g.h_x) if eps_mask is None else float(eps_mask)
        z = field_.dt
        y = field_.dx[:-1]
        mask = y > eps
        Lz = np.zeros_like(z)
        Ly = np.zeros_like(z)
        r = z[mask] / y[mask]
        F, dF = instance.cost.F(r), instance.cost.dF(r)
        Lz[mask] = dF
        Ly[mask] = F - r * dF
        return cls(Lz, Ly, mask, eps)


def masked_difference(values: np.ndarray, mask: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Central difference inside the mask, one-sided where the mask truncates it.

    Entries off the mask, or with no masked neighbour, are zero.
    """
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    mk = np.moveaxis(np.asarray(mask, dtype=bool), axis, 0)
    prev = np.zeros_like(mk)
    nxt = np.zeros_like(mk)
    prev[1:] = mk[:-1]
    nxt[:-1] = mk[1:]
    vp = np.zeros_like(v)
    vn = np.zeros_like(v)
    vp[1:] = v[:-1]
    vn[:-1] = v[1:]
    out = np.zeros_like(v)
    both = mk & prev & nxt
    fwd = mk & nxt & ~prev
    bwd = mk & prev & ~nxt
    out[both] = (vn[both] - vp[both]) / (2 * h)
    out[fwd] = (vn[fwd] - v[fwd]) / h
    out[bwd] = (v[bwd] - vp[bwd]) / h
    return np.moveaxis(out, 0, axis)


def _runs(row: np.ndarray) -> int:
    """Length of the longest run of ``True``."""
    best = cur = 0
    for flag in row:
        cur = cur + 1 if flag else 0
        best = max(best, cur)
    return best


def recover_density(field_: PotentialField) -> np.ndarray:
    """``m(i, j) = D_x phi(i, j)`` on every level, shape ``(n_t + 1, n_x)``."""
    return field_.dx


def _cell_potential(instance: ProblemInstance, grid, v_sampling: str) -> np.ndarray:
    if v_sampling not in SAMPLING_RULES:
        raise DomainError(f"unknown potential sampling rule {v_sampling!r}")
    shift = 0.5 * grid.h_x if v_sampling == "midpoint" else 0.0
    return np.asarray(instance.V(grid.x[:-1] + shift), dtype=float)


@dataclass
class PriceSeries:
    """Multiplier density ``w`` per cell row, terminal multiplier and price.

    ``times``/``varpi`` hold the price on the reported window ``[2 h_t, T]``;
    ``varpi_all`` covers every level.  ``unreliable`` lists levels whose mask
    spans fewer than three consecutive nodes.
    """

    w: np.ndarray
    w_T: float
    times: np.ndarray
    varpi: np.ndarray
    varpi_all: np.ndarray
    unreliable: list[int] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


TIME_RULES = ("midpoint", "trapezoid")


def multiplier_density(field_: PotentialField, instance: ProblemInstance, derivs: MaskedDerivatives,
                       v_sampling: str = "node") -> tuple[np.ndarray, np.ndarray]:
    """Per cell row ``w_i`` and the integrand ``D_t L_z* + D_x (L_y* - V)`` on cells."""
    g = field_.grid
    V = _cell_potential(instance, g, v_sampling)
    m = recover_density(field_)[:-1]
    Dt_Lz = masked_difference(derivs.Lz_star, derivs.mask, g.h_t, axis=0)
    Dx_Ly = masked_difference(derivs.Ly_star - V[None, :], derivs.mask, g.h_x, axis=1)
    integrand = np.where(derivs.mask, Dt_Lz + Dx_Ly, 0.0)
    w = (integrand * m).sum(axis=1) * g.h_x
    return w, integrand


def recover_price(field_: PotentialField, instance: ProblemInstance, eps_mask: Optional[float] = None,
                  v_sampling: str = "node", time_rule: str = "midpoint") -> PriceSeries:
    """Price from the Lagrange-multiplier quadrature.

    ``w_T`` pairs the last cell row of ``L_z*`` with the density at ``T``.
    ``w_i`` is the ``m``-weighted average of the masked integrand on cell row
    ``i``; ``time_rule`` integrates it backwards from ``T`` either as interval
    values (``midpoint``) or as node values at ``t_i`` (``trapezoid``).
    """
    if time_rule not in TIME_RULES:
        raise DomainError(f"unknown price time rule {time_rule!r}")
    g = field_.grid
    derivs = MaskedDerivatives.build(field_, instance, eps_mask)
    m = recover_density(field_)
    gT = np.asarray(instance.uT_prime(g.x[:-1]), dtype=float)
    last = derivs.mask[-1]
    w_T = float(np.sum(np.where(last, derivs.Lz_star[-1] - gT, 0.0) * m[-1]) * g.h_x)
    w, integrand = multiplier_density(field_, instance, derivs, v_sampling)

    varpi = np.empty(g.n_t + 1)
    varpi[-1] = w_T
    if time_rule == "midpoint":
        varpi[:-1] = w_T - np.cumsum((w * g.h_t)[::-1])[::-1]
    else:
        # node values w(t_i) for i < n_t, the last one held to T
        wn = np.append(w, w[-1])
        inc = 0.5 * g.h_t * (wn[1:] + wn[:-1])
        varpi[:-1] = w_T - np.cumsum(inc[::-1])[::-1]

    unreliable = [i for i in range(g.n_t) if _runs(derivs.mask[i]) < 3]
    start = min(2, g.n_t)
    terminal = np.abs(derivs.Lz_star[-1] - gT - w_T)
    interior = np.abs(integrand - w[:, None])
    inner = _interior(derivs.mask)
    diag = {
        "terminal_residual": float(np.max(terminal[_interior(last[None, :])[0]], initial=0.0)),
        "interior_residual": float(np.max(interior[inner], initial=0.0)),
    }
    return PriceSeries(w=w, w_T=w_T, times=g.t[start:], varpi=varpi[start:], varpi_all=varpi,
                       unreliable=unreliable, diagnostics=diag)


def _interior(mask: np.ndarray) -> np.ndarray:
    """Mask entries whose left and right neighbours are in the mask too."""
    out = np.zeros_like(mask)
    out[:, 1:-1] = mask[:, 1:-1] & mask[:, :-2] & mask[:, 2:]
    return out


def recover_value(field_: PotentialField, instance: ProblemInstance,
                  eps_mask: Optional[float] = None) -> np.ndarray:
    """Value function on the nodes ``x_j``, ``j < n_x``, at every level.

    The running cost ``H(F'(D_t phi / D_x phi))`` is taken as constant over
    each cell row and set to ``H(F'(0))`` off the mask.
    """
    g = field_.grid
    derivs = MaskedDerivatives.build(field_, instance, eps_mask)
    z = field_.dt
    y = field_.dx[:-1]
    r = np.zeros_like(z)
    r[derivs.mask] = z[derivs.mask] / y[derivs.mask]
    running = instance.cost.H(instance.cost.dF(r))
    tail = np.zeros((g.n_t + 1, g.n_x))
    tail[:-1] = np.cumsum((running * g.h_t)[::-1], axis=0)[::-1]
    x = g.x[:-1]
    return (np.asarray(instance.uT(x), dtype=float)[None, :] - tail
            - (g.T - g.t)[:, None] * np.asarray(instance.V(x), dtype=float)[None, :])


def value_mask(derivs: MaskedDerivatives) -> np.ndarray:
    """Nodes ``(i, j)`` whose column stays on the mask over every later cell row.

    Only there does the recovered value function avoid the off-mask
    convention; shape ``(n_t + 1, n_x)``, the last level is all true.
    """
    mk = derivs.mask
    out = np.ones((mk.shape[0] + 1, mk.shape[1]), dtype=bool)
    out[:-1] = np.logical_and.accumulate(mk[::-1], axis=0)[::-1]
    return out


def clearing_residual(field_: PotentialField, instance: ProblemInstance, u: np.ndarray,
                      varpi_all: np.ndarray) -> np.ndarray:
    """``|sum_j H'(varpi + D_x u) m h_x + Q|`` per level ``0..n_t``."""
    g = field_.grid
    m = recover_density(field_)
    ux = np.zeros_like(u)
    ux[:, :-1] = np.diff(u, axis=1) / g.h_x
    ux[:, -1] = ux[:, -2]
    flux = instance.cost.dH(varpi_all[:, None] + ux) * m
    Q = instance.supply.sample(g.t)
    return np.abs(flux.sum(axis=1) * g.h_x + Q)


def dual_price(multipliers: np.ndarray, h_t: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Price implied by the solver's balance multipliers.

    Stationarity at interior levels gives ``w(t_i) = -nu_i / h_t`` and at the
    last level ``w_T = nu_{n_t}``.  Returns ``(w, varpi, w_T)`` with ``w`` on
    levels ``1..n_t-1`` and ``varpi`` on every level (right-endpoint sums).
    """
    nu = np.asarray(multipliers, dtype=float)
    n_t = nu.size
    w_T = float(nu[-1])
    w = -nu[:-1] / h_t
    varpi = np.empty(n_t + 1)
    varpi[-1] = w_T
    inc = np.concatenate([w * h_t, [0.0]])  # level k+1 contributes to [t_k, t_{k+1}]
    varpi[:-1] = w_T - np.cumsum(inc[::-1])[::-1]
    return w, varpi, w_T
