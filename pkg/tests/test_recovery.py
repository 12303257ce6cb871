from __future__ import annotations

import numpy as np
import pytest

from pricemfg.analytic import LqParams, lq_benchmark, lq_instance
from pricemfg.discretization import Grid, PotentialField
from pricemfg.errors import DomainError
from pricemfg.problem import InitialDensity, SupplyModel, integrate_supply, zero_qbar
from pricemfg.recovery import (
    MaskedDerivatives,
    dual_price,
    masked_difference,
    recover_density,
    recover_price,
    recover_value,
    value_mask,
)
from pricemfg.solution import Scheme, solve_instance

from conftest import bench_instance, trivial_instance


@pytest.fixture(scope="module")
def trivial_solution():
    g = Grid(1.0, 1.0, 20, 40)
    inst = trivial_instance(20)
    return inst, solve_instance(inst, g)


def test_trivial_density_is_m0(trivial_solution):
    inst, res = trivial_solution
    g = res.solution.grid
    m0_cells = np.diff(res.constraints.M0) / g.h_x
    m = recover_density(res.report.phi_star)
    assert np.max(np.abs(m - m0_cells).sum(axis=1) * g.h_x) <= 1e-6


def test_trivial_price_and_value_vanish(trivial_solution):
    inst, res = trivial_solution
    price = recover_price(res.report.phi_star, inst)
    assert np.max(np.abs(price.varpi_all)) <= 1e-6
    assert abs(price.w_T) <= 1e-6
    np.testing.assert_allclose(recover_value(res.report.phi_star, inst), 0.0, atol=1e-12)


def test_symmetric_lq_price_vanishes():
    # kappa equals the mean of m0 and there is no supply
    sup_err = []
    for k in (1, 2):
        g = Grid(1.0, 1.0, 20 * k, 40 * k)
        sup = integrate_supply(SupplyModel(zero_qbar, 0.0, 0.0, 1.0), 200 * k)
        inst = lq_instance(LqParams(1.0, 1.0, 0.0), sup, InitialDensity(), 1.0)
        res = solve_instance(inst, g)
        assert res.report.converged
        sup_err.append(np.max(np.abs(res.solution.varpi)))
    assert sup_err[1] < sup_err[0] <= 0.01


def test_terminal_value_is_exact(bench_default, grid20):
    res = solve_instance(bench_default, grid20)
    u = recover_value(res.report.phi_star, bench_default)
    np.testing.assert_array_equal(u[-1], np.zeros(40))
    assert res.solution.diagnostics["min_density"] >= -1e-9


def test_analytic_potential_reproduces_price():
    """Feeding the closed-form potential into the recovery gives the explicit price."""
    errs = []
    for k in (1, 2, 4):
        inst = bench_instance(20 * k)
        g = Grid(1.0, 1.0, 20 * k, 40 * k)
        bm = lq_benchmark(inst, g)
        price = recover_price(PotentialField(bm.phi, g), inst, v_sampling="midpoint")
        errs.append(np.max(np.abs(price.varpi - bm.price[2:])))
    assert errs[2] < errs[0]


def test_masked_difference_stencils():
    v = np.array([[0.0, 1.0, 4.0, 9.0, 16.0]])
    mask = np.array([[True, True, True, False, True]])
    d = masked_difference(v, mask, 1.0, axis=1)
    # forward at the left end, central inside, backward at the right end of a run
    np.testing.assert_allclose(d, [[1.0, 2.0, 3.0, 0.0, 0.0]])


def test_value_mask_is_suffix_and():
    mk = np.array([[True, False], [True, True], [False, True]])
    derivs = MaskedDerivatives(np.zeros((3, 2)), np.zeros((3, 2)), mk, 0.1)
    vm = value_mask(derivs)
    assert vm.shape == (4, 2)
    np.testing.assert_array_equal(vm, [[False, False], [False, True], [False, True], [True, True]])


def test_dual_price_right_endpoint_sums():
    nu = np.array([-0.1, -0.2, 0.5])
    w, varpi, w_T = dual_price(nu, 0.1)
    np.testing.assert_allclose(w, [1.0, 2.0])
    assert w_T == 0.5
    np.testing.assert_allclose(varpi, [0.2, 0.3, 0.5, 0.5])


def test_price_rule_validation(bench_default, grid20):
    res = solve_instance(bench_default, grid20)
    with pytest.raises(DomainError):
        recover_price(res.report.phi_star, bench_default, time_rule="simpson")
    with pytest.raises(DomainError):
        Scheme(price_time_rule="simpson")
