"""Smooth convex solver tests."""

import numpy as np
import pytest

from uavharvest.channel import horizontal_surrogate
from uavharvest.solvers import SmoothConvexProgram, SolverError, solve_smooth

from oracles import grid_search_2d


def quad_program(center, lb, ub, x0):
    center = np.asarray(center, dtype=float)
    return SmoothConvexProgram(
        x0=np.asarray(x0, dtype=float),
        objective=lambda x: (float((x - center) @ (x - center)), 2 * (x - center)),
        objective_hess=lambda x: 2 * np.eye(center.size),
        lb=np.asarray(lb, dtype=float), ub=np.asarray(ub, dtype=float),
    )


def test_box_quadratic_recovers_center():
    prog = quad_program([0.3, -0.2, 0.8], [-1, -1, -1], [1, 1, 1], [0, 0, 0])
    rep = solve_smooth(prog)
    assert rep.status == "optimal"
    assert np.abs(rep.x - [0.3, -0.2, 0.8]).max() < 1e-4
    assert rep.max_violation <= 1e-9
    assert rep.kkt_residual <= 1e-5


def test_box_quadratic_clipping():
    # Center outside the box: solution pins to the nearest face.
    prog = quad_program([2.0, 0.0], [-1, -1], [1, 1], [0.0, 0.0])
    rep = solve_smooth(prog)
    assert rep.x[0] == pytest.approx(1.0, abs=1e-4)
    assert rep.x[1] == pytest.approx(0.0, abs=1e-4)


def test_starting_at_optimum_exits_immediately():
    prog = quad_program([0.3, -0.2, 0.8], [-1, -1, -1], [1, 1, 1], [0.3, -0.2, 0.8])
    rep = solve_smooth(prog)
    assert rep.status == "optimal"
    assert rep.iterations <= 2
    assert rep.objective == pytest.approx(0.0, abs=1e-12)


def test_objective_never_worse_than_start():
    # Even from a boundary start the returned objective cannot regress.
    prog = quad_program([0.5, 0.5], [0, 0], [1, 1], [1.0, 1.0])
    prog.interior_anchor = np.array([0.5, 0.5])
    rep = solve_smooth(prog)
    assert rep.objective <= 0.5 + 1e-12      # value at the start


def test_infeasible_start_rejected():
    prog = quad_program([0.0, 0.0], [0, 0], [1, 1], [2.0, 2.0])
    with pytest.raises(SolverError):
        solve_smooth(prog)


def test_single_slot_surrogate_over_disc_matches_grid_search(urban):
    # Maximize the rate minorant over a one-slot reachability disc; the move
    # heads toward the sensor and matches a refined grid search to ~1e-3 m.
    gamma = urban.link_snr[0]
    q_hat = np.array([100.0, 100.0])
    w = np.array([160.0, 130.0])
    z = 60.0
    radius = 8.0
    sur = horizontal_surrogate(q_hat, z, w, gamma, urban)

    def value(q):
        return float(sur.evaluate(q, w, urban))

    def constraints(x):
        d = x - q_hat
        return (np.array([float(d @ d) - radius ** 2]), (2 * d)[None, :])

    def constraint_hess(x, wts):
        return wts[0] * 2 * np.eye(2)

    def objective(x):
        u = np.linalg.norm(x - w)
        eps = 1e-6
        gx = (value(x + [eps, 0]) - value(x - [eps, 0])) / (2 * eps)
        gy = (value(x + [0, eps]) - value(x - [0, eps])) / (2 * eps)
        return -value(x), -np.array([gx, gy])

    prog = SmoothConvexProgram(
        x0=q_hat.copy(), objective=objective, constraints=constraints,
        interior_anchor=q_hat.copy(),
    )
    rep = solve_smooth(prog, kkt_tol=1e-7, iter_cap=2000)
    opt_pt, opt_val = grid_search_2d(value, q_hat, radius, tol=1e-3)
    assert -rep.objective == pytest.approx(opt_val, abs=1e-4)
    assert np.linalg.norm(rep.x - opt_pt) < 5e-3
    # The step moves strictly toward the sensor.
    assert np.linalg.norm(rep.x - w) < np.linalg.norm(q_hat - w) - radius / 2


def test_unconstrained_minimization():
    prog = SmoothConvexProgram(
        x0=np.array([5.0, -3.0]),
        objective=lambda x: (float(x @ x), 2 * x),
        objective_hess=lambda x: 2 * np.eye(2),
    )
    rep = solve_smooth(prog)
    assert rep.status == "optimal"
    assert np.abs(rep.x).max() < 1e-5


def test_lbfgs_path_without_hessians():
    center = np.array([0.2, 0.4, -0.1, 0.7])
    prog = SmoothConvexProgram(
        x0=np.zeros(4),
        objective=lambda x: (float((x - center) @ (x - center)), 2 * (x - center)),
        lb=-np.ones(4), ub=np.ones(4),
    )
    rep = solve_smooth(prog, iter_cap=2000)
    assert np.abs(rep.x - center).max() < 1e-3
