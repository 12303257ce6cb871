from __future__ import annotations

import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from pricemfg.discretization import Grid
from pricemfg.errors import DomainError, SupplyIntegrationError
from pricemfg.problem import (
    InitialDensity,
    ProblemInstance,
    RadiusWarning,
    SupplyModel,
    cumulative_density,
    integrate_supply,
    radius_lower_bound,
    select_radius,
    sine_qbar,
    zero_qbar,
)

from conftest import bench_instance, bench_supply


def test_supply_initial_value():
    sup = integrate_supply(SupplyModel(zero_qbar, 4.0, -0.5, 1.0), 200)
    assert sup.Q[0] == -0.5
    np.testing.assert_allclose(sup.Q, -0.5 * np.exp(-4 * sup.t_nodes), rtol=1e-8)


def test_constant_supply():
    sup = integrate_supply(SupplyModel(zero_qbar, 0.0, 1.0, 1.0), 50)
    np.testing.assert_allclose(sup.Q, 1.0)
    np.testing.assert_allclose(sup.q_cum, sup.t_nodes, atol=1e-14)
    assert sup.q_l1 == pytest.approx(1.0)


def test_sine_supply_matches_variation_of_constants():
    sup = bench_supply(20)
    qbar = sine_qbar(5.0, 3.0)
    exact = np.exp(-4.0) * -0.5 + quad(lambda s: np.exp(-4.0 * (1 - s)) * qbar(s), 0, 1, epsabs=1e-13)[0]
    assert sup.Q[-1] == pytest.approx(exact, abs=1e-7)


def test_supply_errors():
    with pytest.raises(SupplyIntegrationError):
        integrate_supply(SupplyModel(lambda t: np.inf, 1.0, 0.0, 1.0), 10)
    with pytest.raises(DomainError):
        integrate_supply(SupplyModel(zero_qbar, 1.0, 0.0, 1.0), 1)
    with pytest.raises(DomainError):
        SupplyModel(zero_qbar, 1.0, 0.0, 0.0)


def test_supply_sampling_is_exact_on_nodes():
    sup = bench_supply(20)
    np.testing.assert_allclose(sup.sample(sup.t_nodes), sup.Q, atol=1e-14)
    np.testing.assert_allclose(sup.cumulative(sup.t_nodes), sup.q_cum, atol=1e-14)


def test_cumulative_density_uniform():
    m0 = InitialDensity("uniform", 0.5)
    g = Grid(1.0, 1.0, 2, 40)
    M0 = cumulative_density(m0, g)
    x = g.x
    assert M0[np.argmin(abs(x))] == pytest.approx(0.5, abs=1e-12)
    assert M0[np.argmin(abs(x - 0.25))] == pytest.approx(0.75, abs=1e-12)
    assert M0[0] == 0.0 and M0[-1] == 1.0
    assert np.all(np.diff(M0) >= 0)


def test_bump_density_properties():
    m0 = InitialDensity()
    assert quad(m0.pdf, -0.5, 0.5)[0] == pytest.approx(1.0, abs=1e-10)
    assert m0.mbar0 == pytest.approx(0.0, abs=1e-12)
    assert m0.cdf(0.0) == pytest.approx(0.5, abs=1e-10)
    assert m0.variance() > 0


def test_cumulative_density_needs_cover():
    with pytest.raises(DomainError):
        cumulative_density(InitialDensity("bump", 0.5), Grid(1.0, 0.4, 2, 8))


def test_select_radius_examples():
    sup = bench_supply(20)
    m0 = InitialDensity()
    assert radius_lower_bound(m0, sup) == pytest.approx(0.811579, abs=2e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert select_radius(m0, sup) == 1.0
    zero = integrate_supply(SupplyModel(zero_qbar, 0.0, 0.0, 1.0), 10)
    assert select_radius(m0, zero, configured=None) == pytest.approx(0.525)
    with pytest.warns(RadiusWarning):
        select_radius(m0, sup, configured=0.8)
    assert select_radius(m0, sup, lipschitz_bound=0.1) > 1.05 * 0.5


def test_instance_checks():
    inst = bench_instance(20)
    with pytest.raises(DomainError):
        ProblemInstance(inst.cost, inst.supply, inst.V, inst.uT, inst.uT_prime, inst.m0, 1.0, 0.5)
    with pytest.raises(DomainError):
        ProblemInstance(inst.cost, inst.supply, inst.V, inst.uT, inst.uT_prime, inst.m0, 2.0, 1.0)
