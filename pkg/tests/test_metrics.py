from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import trivial_instance
from pricemfg.discretization import Grid
from pricemfg.errors import DomainError, GridMismatchError
from pricemfg.metrics import compare, empirical_order, field_norms, quadrature_weights, refinement_study
from pricemfg.solution import analytic_solution


@pytest.fixture(scope="module")
def analytic20(bench_default, grid20):
    return analytic_solution(bench_default, grid20)


def test_identical_inputs_have_zero_error(analytic20):
    rep = compare(analytic20, analytic20)
    for name, nm in rep.fields.items():
        assert (nm.sup, nm.l1, nm.l2) == (0.0, 0.0, 0.0), name
    assert rep.objective_gap == 0.0


def test_constant_shift(analytic20, grid20):
    shifted = replace(analytic20, phi=analytic20.phi + 1e-3, u=analytic20.u + 1e-3, varpi=analytic20.varpi + 1e-3)
    rep = compare(analytic20, shifted)
    for name in ("phi", "u", "varpi"):
        assert rep.fields[name].sup == pytest.approx(1e-3, rel=1e-9)
    # a constant has no derivative
    assert rep.fields["phi_t"].sup <= 1e-12
    assert rep.fields["phi_x"].sup <= 1e-12
    # trapezoid weights integrate a constant over [0, T] x [-R, R] exactly
    assert rep.fields["phi"].l1 == pytest.approx(1e-3 * grid20.T * 2 * grid20.R, rel=1e-12)


def test_compare_is_symmetric(analytic20):
    other = replace(analytic20, m=analytic20.m * 1.01, varpi=analytic20.varpi - 0.02)
    ab, ba = compare(analytic20, other), compare(other, analytic20)
    assert ab.to_dict() == ba.to_dict()


def test_grid_mismatch(bench_default, analytic20):
    other = analytic_solution(trivial_instance(10), Grid(1.0, 1.0, 10, 40))
    with pytest.raises(GridMismatchError):
        compare(analytic20, other)


def test_norm_axioms(grid20):
    rng = np.random.default_rng(3)
    w = quadrature_weights((21, 41), grid20)
    a, b = rng.normal(size=(2, 21, 41))
    na, nb, nab = field_norms(a, w), field_norms(b, w), field_norms(a + b, w)
    for key in ("sup", "l1", "l2"):
        assert getattr(nab, key) <= getattr(na, key) + getattr(nb, key) + 1e-12
        assert getattr(field_norms(-2.5 * a, w), key) == pytest.approx(2.5 * getattr(na, key))
    assert field_norms(np.zeros((21, 41)), w).l2 == 0.0
    mask = np.zeros((21, 41), dtype=bool)
    assert field_norms(a, w, mask).sup == 0.0


def test_empirical_order():
    assert empirical_order(4e-2, 1e-2) == pytest.approx(2.0)
    assert empirical_order(1e-2, 1e-2) == 0.0
    assert math.isnan(empirical_order(0.0, 1e-3))


def test_refinement_study_on_trivial_instance():
    inst = trivial_instance(20)
    rows = refinement_study(inst, [Grid(1.0, 1.0, 10, 20), Grid(1.0, 1.0, 20, 40)])
    assert all(r.converged for r in rows)
    for r in rows:
        assert r.errors.fields["varpi"].sup <= 1e-6
        assert abs(r.objective) <= 1e-8
    # only the trapezoid cumulative of m0 separates phi from the exact distribution function
    assert set(rows[1].orders) == set(rows[1].errors.fields)
    assert rows[1].orders["phi"] >= 1.5


def test_refinement_study_needs_two_grids():
    with pytest.raises(DomainError):
        refinement_study(trivial_instance(20), [Grid(1.0, 1.0, 20, 40)])
