"""Closed-form benchmark for quadratic cost and quadratic potential.

With ``H(p) = p**2 / (2c)``, ``V(x) = -(eta/2)(x - kappa)**2`` and
``u_T = 0`` the value function stays quadratic in ``x``.  Substituting
``u = a0 + a1 x + a2 x**2`` into ``-u_t + (w + u_x)**2 / (2c) + V = 0`` and
matching powers of ``x`` gives

    a2' = 2 a2**2 / c - eta / 2
    a1' = (2 a2 / c) (w + a1) + eta kappa
    a0' = (w + a1)**2 / (2c) - eta kappa**2 / 2

with zero terminal data.  Densities follow the linear drift
``b = -(w + a1 + 2 a2 x) / c`` along characteristics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline, PchipInterpolator

from .cost import QuadraticCost
from .discretization import Grid
from .errors import CharacteristicsCrossingError, DomainError, RiccatiEscapeError
from .problem import InitialDensity, ProblemInstance, SupplyPath

PriceLike = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LqParams:
    c: float = 1.0
    eta: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"c must be > 0, got {self.c}")
        if not self.eta >= 0:
            raise DomainError(f"eta must be >= 0, got {self.eta}")

    def V(self, x):
        return -0.5 * self.eta * (np.asarray(x, dtype=float) - self.kappa) ** 2


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def lq_instance(params: LqParams, supply: SupplyPath, m0: InitialDensity, R: float) -> ProblemInstance:
    return ProblemInstance(
        cost=QuadraticCost(params.c),
        supply=supply,
        V=params.V,
        uT=_zero,
        uT_prime=_zero,
        m0=m0,
        T=supply.T,
        R=R,
        lq_params=params,
    )


def _tail_integral(values: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Trapezoid ``int_t^T`` of nodal values for every node."""
    inc = 0.5 * np.diff(t) * (values[1:] + values[:-1])
    out = np.zeros_like(values, dtype=float)
    out[:-1] = np.cumsum(inc[::-1])[::-1]
    return out


def explicit_price(params: LqParams, supply: SupplyPath, mbar0: float) -> np.ndarray:
    """Equilibrium price on the supply nodes (nested trapezoid)."""
    t = supply.t_nodes
    T = supply.T
    return (params.eta * (params.kappa - mbar0) * (T - t)
            - params.eta * _tail_integral(supply.q_cum, t)
            - params.c * supply.Q)


def _as_callable(price: PriceLike, t_nodes: np.ndarray) -> Callable:
    if callable(price):
        return price
    price = np.asarray(price, dtype=float)
    if price.shape != t_nodes.shape:
        raise DomainError("price samples must match the time nodes")
    return CubicSpline(t_nodes, price)


@dataclass(frozen=True)
class AnsatzCoefficients:
    t: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    a2: np.ndarray

    def u(self, i, x):
        """Value function at time node ``i`` (or all nodes) and positions ``x``."""
        x = np.asarray(x, dtype=float)
        return self.a0[i] + self.a1[i] * x + self.a2[i] * x**2

    def splines(self):
        return tuple(CubicSpline(self.t, a) for a in (self.a0, self.a1, self.a2))


def solve_ansatz_odes(params: LqParams, t_nodes: np.ndarray, price: PriceLike) -> AnsatzCoefficients:
    """Backward RK4 for the coefficient system on uniform ``t_nodes``."""
    t = np.asarray(t_nodes, dtype=float)
    w = _as_callable(price, t)
    c, eta, kap = params.c, params.eta, params.kappa

    def rhs(s, a):
        a0, a1, a2 = a
        p = float(w(s)) + a1
        return np.array([p * p / (2 * c) - 0.5 * eta * kap**2,
                         2 * a2 / c * p + eta * kap,
                         2 * a2 * a2 / c - 0.5 * eta])

    n = t.size
    out = np.zeros((n, 3))
    for k in range(n - 1, 0, -1):
        s, h = t[k], t[k - 1] - t[k]  # negative step
        a = out[k]
        k1 = rhs(s, a)
        k2 = rhs(s + h / 2, a + h / 2 * k1)
        k3 = rhs(s + h / 2, a + h / 2 * k2)
        k4 = rhs(s + h, a + h * k3)
        out[k - 1] = a + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(out[k - 1])) or abs(out[k - 1, 2]) > 1e12:
            raise RiccatiEscapeError(f"a2 escapes near t={t[k - 1]:.6g}", float(t[k - 1]))
    return AnsatzCoefficients(t, out[:, 0], out[:, 1], out[:, 2])


def _fd_weights(offsets: np.ndarray) -> np.ndarray:
    """First-derivative weights (unit spacing) on the given stencil offsets."""
    n = offsets.size
    A = np.vander(offsets.astype(float), n, increasing=True).T
    rhs = np.zeros(n)
    rhs[1] = 1.0
    return np.linalg.solve(A, rhs)


def _time_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Sixth-order finite differences on seven points, shifted one-sided near the ends."""
    f = np.asarray(values, dtype=float)
    n = f.size
    if n < 7:
        raise DomainError("need at least seven time nodes")
    d = np.empty_like(f)
    centre = _fd_weights(np.arange(-3, 4))
    d[3:-3] = sum(w * f[3 + k:n - 3 + k] for k, w in zip(range(-3, 4), centre))
    for i in list(range(3)) + list(range(n - 3, n)):
        lo = min(max(i - 3, 0), n - 7)
        offs = np.arange(lo, lo + 7) - i
        d[i] = _fd_weights(offs) @ f[lo:lo + 7]
    return d / h


def hj_residual(params: LqParams, coeffs: AnsatzCoefficients, price: PriceLike, x: np.ndarray) -> float:
    """Sup of ``|-u_t + (w + u_x)**2 / (2c) + V|`` with ``u_t`` by differencing.

    The time derivative comes from differencing the computed coefficients,
    not from the ODE right-hand side, so a wrong coefficient system shows up
    here.
    """
    t = coeffs.t
    h = t[1] - t[0]
    if not np.allclose(np.diff(t), h):
        raise DomainError("residual check needs uniform time nodes")
    w = _as_callable(price, t)(t)
    x = np.asarray(x, dtype=float)[None, :]
    da0, da1, da2 = (_time_derivative(a, h)[:, None] for a in (coeffs.a0, coeffs.a1, coeffs.a2))
    u_t = da0 + da1 * x + da2 * x**2
    u_x = coeffs.a1[:, None] + 2 * coeffs.a2[:, None] * x
    res = -u_t + (w[:, None] + u_x) ** 2 / (2 * params.c) + params.V(x)
    return float(np.max(np.abs(res)))


def drift(params: LqParams, w, a1, a2, x):
    return -(w + a1 + 2 * a2 * x) / params.c


@dataclass(frozen=True)
class Characteristics:
    """Trajectories ``X[k, s]`` and Jacobians ``J[k, s]`` at times ``t[k]`` for seeds ``y[s]``."""

    t: np.ndarray
    y: np.ndarray
    X: np.ndarray
    J: np.ndarray

    def foot(self, k: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Seed and Jacobian carried to ``x`` at time index ``k``; NaN off the support."""
        Xk = self.X[k]
        if np.any(np.diff(Xk) <= 0):
            raise CharacteristicsCrossingError(f"characteristics cross at t={self.t[k]:.6g}")
        x = np.asarray(x, dtype=float)
        inside = (x >= Xk[0]) & (x <= Xk[-1])
        ys = np.full(x.shape, np.nan)
        Js = np.full(x.shape, np.nan)
        ys[inside] = PchipInterpolator(Xk, self.y)(x[inside])
        Js[inside] = PchipInterpolator(Xk, self.J[k])(x[inside])
        return ys, Js


def integrate_characteristics(params: LqParams, coeffs: AnsatzCoefficients, price: PriceLike,
                              m0: InitialDensity, n_seeds: int = 2001) -> Characteristics:
    """Forward RK4 for ``X' = b(t, X)`` and ``(log J)' = b_x`` from seeds on ``supp m0``."""
    t = coeffs.t
    w = _as_callable(price, t)
    a0s, a1s, a2s = coeffs.splines()
    R0 = m0.support_radius
    y = np.linspace(-R0, R0, n_seeds)

    def rhs(s, X):
        a1, a2 = a1s(s), a2s(s)
        return drift(params, w(s), a1, a2, X), -2 * a2 / params.c

    X = np.empty((t.size, n_seeds))
    logJ = np.zeros(t.size)
    X[0] = y
    for k in range(t.size - 1):
        s, h = t[k], t[k + 1] - t[k]
        x0, l0 = X[k], logJ[k]
        k1 = rhs(s, x0)
        k2 = rhs(s + h / 2, x0 + h / 2 * k1[0])
        k3 = rhs(s + h / 2, x0 + h / 2 * k2[0])
        k4 = rhs(s + h, x0 + h * k3[0])
        X[k + 1] = x0 + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        logJ[k + 1] = l0 + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    # b_x does not depend on x for a linear drift
    J = np.exp(logJ)[:, None] * np.ones((1, n_seeds))
    return Characteristics(t, y, X, J)


def transport_density(chars: Characteristics, m0: InitialDensity, x: np.ndarray,
                      time_index=None) -> np.ndarray:
    """Density ``m(t_k, x) = m0(y) / J`` at the requested fine time indices."""
    ks = range(chars.t.size) if time_index is None else np.atleast_1d(time_index)
    out = np.zeros((len(ks), np.size(x)))
    for row, k in enumerate(ks):
        ys, Js = chars.foot(int(k), x)
        ok = np.isfinite(ys)
        out[row, ok] = m0.pdf(ys[ok]) / Js[ok]
    return out


def analytic_potential(m: np.ndarray, b: np.ndarray, t: np.ndarray, M0: np.ndarray) -> np.ndarray:
    """``phi(t, x) = M0(x) - int_0^t b m ds`` by trapezoid over the rows of ``m``, ``b``."""
    flux = b * m
    inc = 0.5 * np.diff(t)[:, None] * (flux[1:] + flux[:-1])
    cum = np.vstack([np.zeros((1, flux.shape[1])), np.cumsum(inc, axis=0)])
    return M0[None, :] - cum


def potential_from_characteristics(chars: Characteristics, m0: InitialDensity, x: np.ndarray,
                                   time_index) -> np.ndarray:
    """``phi(t, x) = M0(foot of x)``: the mass to the left of ``x`` is carried along."""
    ks = np.atleast_1d(time_index)
    out = np.empty((ks.size, np.size(x)))
    for row, k in enumerate(ks):
        Xk = chars.X[int(k)]
        ys, _ = chars.foot(int(k), x)
        vals = np.where(x < Xk[0], 0.0, 1.0)
        ok = np.isfinite(ys)
        vals[ok] = m0.cdf(ys[ok])
        out[row] = vals
    return out


def continuous_objective(params: LqParams, coeffs: AnsatzCoefficients, price: PriceLike,
                         chars: Characteristics, m0: InitialDensity) -> float:
    """Value of the continuous functional along the exact solution.

    Uses ``L(phi_t, phi_x) = c b**2 m / 2`` and pushes the space integral
    back to the seeds: ``int g(t, x) m(t, x) dx = int g(t, X(t; y)) m0(y) dy``.
    """
    t = chars.t
    w = _as_callable(price, t)(t)[:, None]
    b = drift(params, w, coeffs.a1[:, None], coeffs.a2[:, None], chars.X)
    integrand = 0.5 * params.c * b**2 - params.V(chars.X)
    weights = m0.pdf(chars.y)
    per_time = simpson(integrand * weights[None, :], x=chars.y, axis=1)
    return float(simpson(per_time, x=t))


@dataclass
class LqBenchmark:
    """Analytic solution sampled on an optimisation grid (and its fine time grid)."""

    params: LqParams
    grid: Grid
    price_fine: np.ndarray
    coeffs: AnsatzCoefficients
    chars: Characteristics
    phi: np.ndarray
    m_nodes: np.ndarray
    u: np.ndarray
    price: np.ndarray
    objective_continuous: float
    objective_grid: float
    refine: int

    def drift_nodes(self) -> np.ndarray:
        k = np.arange(self.grid.n_t + 1) * self.refine
        return drift(self.params, self.price[:, None], self.coeffs.a1[k, None],
                     self.coeffs.a2[k, None], self.grid.x[None, :])


def lq_benchmark(instance: ProblemInstance, grid: Grid, n_seeds: int = 2001) -> LqBenchmark:
    """Assemble the analytic solution on ``grid``.

    The fine time grid is the supply path's node set, which must contain the
    grid's time levels.
    """
    params = instance.lq_params
    if params is None:
        raise DomainError("instance carries no LQ parameters")
    supply = instance.supply
    t_fine = supply.t_nodes
    refine = (t_fine.size - 1) // grid.n_t
    if refine * grid.n_t != t_fine.size - 1:
        raise DomainError("supply nodes must refine the grid's time levels")
    m0 = instance.m0
    price_fine = explicit_price(params, supply, m0.mbar0)
    coeffs = solve_ansatz_odes(params, t_fine, price_fine)
    chars = integrate_characteristics(params, coeffs, price_fine, m0, n_seeds)
    levels = np.arange(grid.n_t + 1) * refine
    phi = potential_from_characteristics(chars, m0, grid.x, levels)
    m_nodes = transport_density(chars, m0, grid.x, levels)
    u = coeffs.a0[levels, None] + coeffs.a1[levels, None] * grid.x + coeffs.a2[levels, None] * grid.x**2
    b = drift(params, price_fine[levels, None], coeffs.a1[levels, None], coeffs.a2[levels, None], grid.x[None, :])
    # exact integrand on the lower-left node of every cell
    dens = m_nodes[:-1, :-1]
    flux = -b[:-1, :-1] * dens
    cell = (instance.cost.F(-b[:-1, :-1]) * dens - instance.V(grid.x[:-1]) * dens
            - instance.uT_prime(grid.x[:-1]) * flux)
    return LqBenchmark(
        params=params,
        grid=grid,
        price_fine=price_fine,
        coeffs=coeffs,
        chars=chars,
        phi=phi,
        m_nodes=m_nodes,
        u=u,
        price=price_fine[levels],
        objective_continuous=continuous_objective(params, coeffs, price_fine, chars, m0),
        objective_grid=float(cell.sum() * grid.cell_area),
        refine=refine,
    )
