"""Independent conic solve of the discrete problem (second-order cone form of the perspective)."""

from __future__ import annotations

import numpy as np

cp = None
try:
    import cvxpy as cp
except ImportError:  # pragma: no cover
    pass


def conic_solve(objective, constraints):
    """Minimise the discrete objective for a quadratic cost with cvxpy.

    ``c z**2 / (2 y)`` is the epigraph ``s y >= z**2``, written as the cone
    ``||(2z, s - y)|| <= s + y``.
    """
    g = objective.grid
    c = objective.cost.c
    P = cp.Variable(g.shape)
    z = (P[1:, :-1] - P[:-1, :-1]) / g.h_t
    y = (P[:-1, 1:] - P[:-1, :-1]) / g.h_x
    s = cp.Variable((g.n_t, g.n_x))
    zf, yf, sf = (cp.vec(a, order="C") for a in (z, y, s))
    lin = cp.sum(cp.multiply(np.asarray(objective.V_cell), y)) + cp.sum(cp.multiply(np.asarray(objective.g_cell), z))
    A, b = constraints.matrix()
    cons = [
        cp.SOC(sf + yf, cp.vstack([2 * zf, sf - yf]), axis=0),
        A @ cp.vec(P, order="C") == b,
        P[:, 1:] - P[:, :-1] >= 0,
    ]
    prob = cp.Problem(cp.Minimize((c / 2 * cp.sum(s) - lin) * g.cell_area), cons)
    prob.solve(solver="CLARABEL")
    return float(prob.value), np.asarray(P.value)
