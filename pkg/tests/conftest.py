from __future__ import annotations

import numpy as np
import pytest

from pricemfg.analytic import LqParams, lq_instance
from pricemfg.discretization import Grid
from pricemfg.problem import InitialDensity, SupplyModel, integrate_supply, sine_qbar, zero_qbar

SUPPLY_REFINE = 10


def bench_supply(n_t: int = 20, T: float = 1.0):
    return integrate_supply(SupplyModel(sine_qbar(5.0, 3.0), 4.0, -0.5, T), SUPPLY_REFINE * n_t)


def bench_instance(n_t: int = 20, c: float = 1.0, eta: float = 1.0, kappa: float = 0.0):
    return lq_instance(LqParams(c, eta, kappa), bench_supply(n_t), InitialDensity(), 1.0)


def trivial_instance(n_t: int = 20, m0: InitialDensity | None = None):
    sup = integrate_supply(SupplyModel(zero_qbar, 0.0, 0.0, 1.0), SUPPLY_REFINE * n_t)
    return lq_instance(LqParams(1.0, 0.0, 0.0), sup, m0 or InitialDensity(), 1.0)


def random_instance(rng: np.random.Generator, n_t: int = 5, max_l1: float = 0.3):
    """Smooth random supply (two sine modes), rescaled so that ``q_l1 <= max_l1``."""
    a = rng.uniform(-1, 1, 2)
    f = rng.uniform(0.5, 3.0, 2)
    alpha = rng.uniform(0.0, 4.0)
    q0 = rng.uniform(-0.2, 0.2)

    def make(scale):
        qbar = lambda t: scale * (a[0] * np.sin(f[0] * np.pi * t) + a[1] * np.cos(f[1] * np.pi * t))
        return integrate_supply(SupplyModel(qbar, alpha, scale * q0, 1.0), SUPPLY_REFINE * n_t)

    sup = make(1.0)
    if sup.q_l1 > max_l1:
        sup = make(0.9 * max_l1 / sup.q_l1)
    params = LqParams(rng.uniform(0.5, 2.0), rng.uniform(0.0, 2.0), rng.uniform(-0.3, 0.3))
    return lq_instance(params, sup, InitialDensity(), 1.0)


@pytest.fixture(scope="session")
def grid20():
    return Grid(1.0, 1.0, 20, 40)


@pytest.fixture(scope="session")
def bench_default():
    return bench_instance(20)
