"""Problem data: supply path, initial density, potential, terminal cost, radius."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Any, Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.interpolate import CubicSpline

from .cost import CostModel
from .errors import DomainError, SupplyIntegrationError

if TYPE_CHECKING:
    from .analytic import LqParams


class RadiusWarning(UserWarning):
    """The truncation radius does not clear the guaranteed-feasibility bound."""


@dataclass(frozen=True)
class SupplyModel:
    """Mean-reverting supply ``Q' = Qbar(t) - alpha Q``, ``Q(0) = q0``."""

    qbar: Callable[[float], float]
    alpha: float
    q0: float
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError(f"horizon T must be > 0, got {self.T}")


@dataclass(frozen=True)
class SupplyPath:
    t_nodes: np.ndarray
    Q: np.ndarray
    q_cum: np.ndarray
    q_l1: float

    @property
    def T(self) -> float:
        return float(self.t_nodes[-1])

    @cached_property
    def _Q_spline(self):
        return CubicSpline(self.t_nodes, self.Q)

    @cached_property
    def _q_spline(self):
        return CubicSpline(self.t_nodes, self.q_cum)

    def sample(self, t) -> np.ndarray:
        """Supply at times ``t``; exact on nodes, cubic spline in between."""
        return self._Q_spline(np.asarray(t, dtype=float))

    def cumulative(self, t) -> np.ndarray:
        return self._q_spline(np.asarray(t, dtype=float))


def _cumtrapz(values: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(values, dtype=float)
    out[1:] = np.cumsum(0.5 * h * (values[1:] + values[:-1]))
    return out


def integrate_supply(model: SupplyModel, n_steps: int) -> SupplyPath:
    """Classical RK4 on ``n_steps`` uniform steps, plus trapezoid integrals."""
    if int(n_steps) != n_steps or n_steps < 2:
        raise DomainError(f"n_steps must be an integer >= 2, got {n_steps}")
    n_steps = int(n_steps)
    h = model.T / n_steps
    t = np.linspace(0.0, model.T, n_steps + 1)
    Q = np.empty(n_steps + 1)
    Q[0] = model.q0

    def rhs(s, q):
        qb = float(model.qbar(s))
        if not math.isfinite(qb):
            raise SupplyIntegrationError(
                f"average supply is not finite at t={s}", {"time": float(s), "value": qb}
            )
        return qb - model.alpha * q

    for n in range(n_steps):
        s, q = t[n], Q[n]
        k1 = rhs(s, q)
        k2 = rhs(s + h / 2, q + h / 2 * k1)
        k3 = rhs(s + h / 2, q + h / 2 * k2)
        k4 = rhs(s + h, q + h * k3)
        Q[n + 1] = q + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    q_cum = _cumtrapz(Q, h)
    return SupplyPath(t_nodes=t, Q=Q, q_cum=q_cum, q_l1=_l1_norm(t, Q))


def _l1_norm(t: np.ndarray, values: np.ndarray) -> float:
    """``int |Q|`` of the cubic spline through the nodes, integrated exactly between its roots."""
    spline = CubicSpline(t, values)
    roots = spline.roots(extrapolate=False)
    cuts = np.unique(np.concatenate([[t[0]], roots[(roots > t[0]) & (roots < t[-1])], [t[-1]]]))
    return float(sum(abs(spline.integrate(a, b)) for a, b in zip(cuts[:-1], cuts[1:])))


def sine_qbar(amplitude: float = 5.0, frequency: float = 3.0) -> Callable[[float], float]:
    """``amplitude * sin(frequency * pi * t)``."""
    return lambda t: amplitude * np.sin(frequency * np.pi * t)


def zero_qbar(t):
    return 0.0 * t


def _bump_shape(x, radius):
    x = np.asarray(x, dtype=float)
    r2 = (x / radius) ** 2
    out = np.zeros_like(x)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def _uniform_shape(x, radius):
    # half height on the jump so trapezoid sums see the cell average
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    return np.where(ax < radius, 1.0, np.where(ax == radius, 0.5, 0.0))


_SHAPES = {"bump": _bump_shape, "uniform": _uniform_shape}


@dataclass(frozen=True)
class InitialDensity:
    """Compactly supported probability density on ``[-R0, R0]``.

    ``pdf`` is normalised exactly (adaptive quadrature); ``on_grid`` returns
    samples renormalised so the trapezoid mass on that grid is one.
    """

    kind: str = "bump"
    support_radius: float = 0.5
    _norm: float = field(init=False, repr=False)
    mbar0: float = field(init=False)

    def __post_init__(self):
        if self.kind not in _SHAPES:
            raise DomainError(f"unknown initial density kind {self.kind!r}")
        if not self.support_radius > 0:
            raise DomainError("support radius must be > 0")
        shape = _SHAPES[self.kind]
        R0 = self.support_radius
        Z = quad(lambda s: float(shape(s, R0)), -R0, R0, epsabs=1e-14, epsrel=1e-13)[0]
        mean = quad(lambda s: s * float(shape(s, R0)), -R0, R0, epsabs=1e-14, epsrel=1e-13)[0]
        object.__setattr__(self, "_norm", Z)
        object.__setattr__(self, "mbar0", mean / Z)

    def pdf(self, x) -> np.ndarray:
        return _SHAPES[self.kind](x, self.support_radius) / self._norm

    @cached_property
    def _cdf_table(self):
        R0 = self.support_radius
        xs = np.linspace(-R0, R0, 40001)
        cum = cumulative_simpson(self.pdf(xs), x=xs, initial=0.0)
        return xs, cum / cum[-1]

    def cdf(self, x) -> np.ndarray:
        """Cumulative distribution from a fine Simpson table."""
        x = np.asarray(x, dtype=float)
        R0 = self.support_radius
        return np.where(x <= -R0, 0.0, np.where(x >= R0, 1.0, np.interp(x, *self._cdf_table)))

    def variance(self) -> float:
        R0 = self.support_radius
        return quad(lambda s: (s - self.mbar0) ** 2 * float(self.pdf(s)), -R0, R0, epsabs=1e-14)[0]

    def on_grid(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        vals = self.pdf(x)
        mass = np.sum(0.5 * np.diff(x) * (vals[1:] + vals[:-1]))
        if mass <= 0:
            raise DomainError("initial density has no mass on this grid")
        return vals / mass


def cumulative_density(m0: InitialDensity, grid) -> np.ndarray:
    """Trapezoid cumulative of ``m0`` from ``-R`` on the grid's space nodes."""
    x = grid.x
    if x[0] > -m0.support_radius or x[-1] < m0.support_radius:
        raise DomainError("grid does not cover the support of m0")
    vals = m0.on_grid(x)
    M0 = _cumtrapz(vals, grid.h_x)
    # the normalisation makes M0[-1] one up to rounding; pin it
    M0 /= M0[-1]
    return M0


def radius_lower_bound(m0: InitialDensity, supply: SupplyPath) -> float:
    """``R0 + ||Q||_L1``: below this the admissible set may be empty."""
    return m0.support_radius + supply.q_l1


def select_radius(
    m0: InitialDensity,
    supply: SupplyPath,
    lipschitz_bound: Optional[float] = None,
    configured: Optional[float] = 1.0,
    safety: float = 1.05,
) -> float:
    """Truncation radius for the space domain ``[-R, R]``.

    With a Lipschitz bound ``C0`` on the drift, returns the safety factor
    times the larger of the Gronwall branch and ``R0 + ||Q||_L1``.  Without
    one, returns ``configured``; pass ``configured=None`` to use the supply
    branch alone.  A configured radius below the supply branch only warns.
    """
    lower = radius_lower_bound(m0, supply)
    if lipschitz_bound is not None:
        c0T = lipschitz_bound * supply.T
        gronwall = (m0.support_radius + c0T) * (1.0 + c0T * math.exp(c0T))
        return safety * max(gronwall, lower)
    if configured is None:
        return safety * lower
    if configured <= lower:
        warnings.warn(
            f"radius {configured} does not exceed R0 + ||Q||_L1 = {lower:.6g}; "
            "feasibility is not guaranteed",
            RadiusWarning,
            stacklevel=2,
        )
    return float(configured)


@dataclass(frozen=True)
class ProblemInstance:
    cost: CostModel
    supply: SupplyPath
    V: Callable[[np.ndarray], np.ndarray]
    uT: Callable[[np.ndarray], np.ndarray]
    uT_prime: Callable[[np.ndarray], np.ndarray]
    m0: InitialDensity
    T: float
    R: float
    lq_params: Optional["LqParams"] = None
    notes: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.R > self.m0.support_radius:
            raise DomainError(f"radius R={self.R} must exceed the support radius of m0")
        if abs(self.supply.T - self.T) > 1e-12:
            raise DomainError("supply path horizon differs from the instance horizon")
