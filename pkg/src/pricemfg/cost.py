"""Hamiltonian, its Legendre transform, and the perspective integrand.

The variational problem only ever sees the Lagrangian ``F`` through the
perspective ``L(z, y) = F(z / y) * y``, extended to ``y = 0`` by ``+inf``
(for ``z != 0``) and ``0`` (for ``z == 0``).  Infinity is IEEE ``inf``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike

from .errors import DegeneratePointError, DomainError


class CostModel:
    """A uniformly convex Hamiltonian ``H`` paired with its analytic transform ``F``.

    Subclasses supply ``H``, ``dH``, ``F``, ``dF`` and ``d2F`` as vectorised
    callables plus the growth constants ``F(v) >= c_growth * |v|**p_growth``.
    """

    c_growth: float
    p_growth: float

    def H(self, p):
        raise NotImplementedError

    def dH(self, p):
        raise NotImplementedError

    def F(self, v):
        raise NotImplementedError

    def dF(self, v):
        raise NotImplementedError

    def d2F(self, v):
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticCost(CostModel):
    """``H(p) = p**2 / (2c)`` and ``F(v) = c v**2 / 2``."""

    c: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise DomainError(f"cost weight c must be finite and > 0, got {self.c}")

    @property
    def c_growth(self) -> float:
        return self.c / 2.0

    @property
    def p_growth(self) -> float:
        return 2.0

    def H(self, p):
        return np.asarray(p, dtype=float) ** 2 / (2.0 * self.c)

    def dH(self, p):
        return np.asarray(p, dtype=float) / self.c

    def F(self, v):
        return 0.5 * self.c * np.asarray(v, dtype=float) ** 2

    def dF(self, v):
        return self.c * np.asarray(v, dtype=float)

    def d2F(self, v):
        return np.full(np.shape(v), self.c, dtype=float)


@dataclass(frozen=True)
class CallableCost(CostModel):
    """Extension point for a user supplied convex pair with analytic ``F``."""

    h: Callable
    dh: Callable
    f: Callable
    df: Callable
    d2f: Callable
    c_growth: float
    p_growth: float

    def __post_init__(self):
        if not self.c_growth > 0 or not self.p_growth > 1:
            raise DomainError("growth constants need c_growth > 0 and p_growth > 1")

    def H(self, p):
        return np.asarray(self.h(np.asarray(p, dtype=float)), dtype=float)

    def dH(self, p):
        return np.asarray(self.dh(np.asarray(p, dtype=float)), dtype=float)

    def F(self, v):
        return np.asarray(self.f(np.asarray(v, dtype=float)), dtype=float)

    def dF(self, v):
        return np.asarray(self.df(np.asarray(v, dtype=float)), dtype=float)

    def d2F(self, v):
        return np.asarray(self.d2f(np.asarray(v, dtype=float)), dtype=float)


def _scalar_or_array(out: np.ndarray, *inputs):
    if all(np.ndim(a) == 0 for a in inputs):
        return float(out)
    return out


def _check_finite(**arrays):
    for name, a in arrays.items():
        if not np.all(np.isfinite(a)):
            raise DomainError(f"{name} must be finite")


def perspective(model: CostModel, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Unchecked array evaluation of ``L``; callers guarantee ``y >= 0``."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(z, y).shape)
    z, y = np.broadcast_arrays(z, y)
    pos = y > 0
    out[pos] = model.F(z[pos] / y[pos]) * y[pos]
    out[~pos & (z != 0)] = np.inf
    return out


def eval_L(model: CostModel, z: ArrayLike, y: ArrayLike):
    """Perspective integrand ``F(z/y) y`` with its closure at ``y = 0``."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_finite(z=z, y=y)
    if np.any(y < 0):
        raise DomainError("L(z, y) is undefined for y < 0")
    return _scalar_or_array(perspective(model, z, y), z, y)


def _ratio(z, y):
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_finite(z=z, y=y)
    if np.any(y <= 0):
        raise DegeneratePointError("derivatives of L need y > 0; use the masked variants")
    return z, y, z / y


def eval_L_z(model: CostModel, z: ArrayLike, y: ArrayLike):
    """``dL/dz = F'(z/y)``."""
    z, y, r = _ratio(z, y)
    return _scalar_or_array(model.dF(r), z, y)


def eval_L_y(model: CostModel, z: ArrayLike, y: ArrayLike):
    """``dL/dy = F(r) - r F'(r)`` with ``r = z/y``."""
    z, y, r = _ratio(z, y)
    return _scalar_or_array(model.F(r) - r * model.dF(r), z, y)


def eval_H_of_Fprime(model: CostModel, r: ArrayLike):
    """``H(F'(r))``, the running cost in the value-function representation."""
    r = np.asarray(r, dtype=float)
    _check_finite(r=r)
    return _scalar_or_array(model.H(model.dF(r)), r)
