"""Log-barrier solver for smooth convex programs with box bounds.

Minimizes a smooth convex objective subject to smooth convex inequality
constraints c_i(x) <= 0 and box bounds. The barrier subproblems are solved
with damped Newton steps when the program supplies Hessian callbacks (the
trajectory subproblems do, and their Hessians are cheap block structures) and
with L-BFGS otherwise. Backtracking line search keeps iterates strictly
feasible; the best feasible iterate seen, including the supplied start, is
what gets returned, so the objective never ends up worse than at the start.

Starting points sitting exactly on the boundary are pulled toward a supplied
strictly-interior anchor before the barrier loop; multiplier estimates from
the final barrier parameter give the KKT residual. A cheap KKT test runs
first so an already-optimal start returns immediately.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .base import SolveReport, SolverError

_FEAS_MARGIN = 1e-11
_BARRIER_MU = 20.0
_ARMIJO = 1e-4
_MAX_BACKTRACK = 60


@dataclass
class SmoothConvexProgram:
    """Callbacks plus bounds describing one convex subproblem (minimization).

    ``objective(x) -> (f, grad)``; ``constraints(x) -> (c, jac)`` with
    ``c <= 0`` feasible; ``constraint_hess(x, w)`` must return
    ``sum_i w_i * hess(c_i)(x)`` so the barrier Hessian can be assembled in
    one call. ``interior_anchor`` is any strictly feasible point, used to pull
    boundary starting points into the interior. ``meta`` carries
    expansion-point bookkeeping for SCA callers and is not interpreted here.
    """

    x0: np.ndarray
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]]
    constraints: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    objective_hess: Callable[[np.ndarray], np.ndarray] | None = None
    constraint_hess: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    constraints_val: Callable[[np.ndarray], np.ndarray] | None = None
    objective_val: Callable[[np.ndarray], float] | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    interior_anchor: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).copy()
        n = self.x0.size
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if self.lb.size != n or self.ub.size != n:
            raise SolverError("bound arrays must match x0")

    @property
    def newton_ready(self) -> bool:
        has_obj = self.objective_hess is not None
        has_con = self.constraints is None or self.constraint_hess is not None
        return has_obj and has_con


def _eval_constraints(prog: SmoothConvexProgram, x: np.ndarray):
    if prog.constraints is None:
        return np.zeros(0), np.zeros((0, x.size))
    c, jac = prog.constraints(x)
    return np.atleast_1d(np.asarray(c, dtype=float)), np.atleast_2d(np.asarray(jac, dtype=float))


def _constraint_values(prog: SmoothConvexProgram, x: np.ndarray) -> np.ndarray:
    if prog.constraints is None:
        return np.zeros(0)
    if prog.constraints_val is not None:
        return np.atleast_1d(np.asarray(prog.constraints_val(x), dtype=float))
    return _eval_constraints(prog, x)[0]


def _violation(prog: SmoothConvexProgram, x: np.ndarray) -> float:
    c = _constraint_values(prog, x)
    v = float(np.max(c, initial=0.0))
    v = max(v, float(np.max(prog.lb - x, initial=0.0)))
    v = max(v, float(np.max(x - prog.ub, initial=0.0)))
    return max(v, 0.0)


def _strictly_feasible(prog: SmoothConvexProgram, x: np.ndarray) -> bool:
    c = _constraint_values(prog, x)
    if c.size and np.max(c) >= -_FEAS_MARGIN:
        return False
    lo = x - prog.lb
    hi = prog.ub - x
    return bool(np.min(lo, initial=np.inf) > _FEAS_MARGIN
                and np.min(hi, initial=np.inf) > _FEAS_MARGIN)


def _barrier_value(prog, x, t):
    if prog.objective_val is not None:
        f = float(prog.objective_val(x))
    else:
        f, _ = prog.objective(x)
    c = _constraint_values(prog, x)
    lo = x - prog.lb
    hi = prog.ub - x
    if (c.size and np.max(c) >= 0) or np.min(lo, initial=np.inf) <= 0 \
            or np.min(hi, initial=np.inf) <= 0:
        return np.inf, f
    val = t * f
    if c.size:
        val -= float(np.sum(np.log(-c)))
    finite_lo = np.isfinite(prog.lb)
    finite_hi = np.isfinite(prog.ub)
    if finite_lo.any():
        val -= float(np.sum(np.log(lo[finite_lo])))
    if finite_hi.any():
        val -= float(np.sum(np.log(hi[finite_hi])))
    return val, f


def _barrier_grad(prog, x, t):
    f, g = prog.objective(x)
    c, jac = _eval_constraints(prog, x)
    grad = t * np.asarray(g, dtype=float)
    if c.size:
        grad += jac.T @ (1.0 / (-c))
    finite_lo = np.isfinite(prog.lb)
    finite_hi = np.isfinite(prog.ub)
    if finite_lo.any():
        grad[finite_lo] -= 1.0 / (x[finite_lo] - prog.lb[finite_lo])
    if finite_hi.any():
        grad[finite_hi] += 1.0 / (prog.ub[finite_hi] - x[finite_hi])
    return grad, f, c, jac


def _barrier_hess(prog, x, t, c, jac):
    n = x.size
    h = t * np.asarray(prog.objective_hess(x), dtype=float)
    if c.size:
        inv = 1.0 / (-c)
        h += (jac * (inv ** 2)[:, None]).T @ jac
        if prog.constraint_hess is not None:
            h += np.asarray(prog.constraint_hess(x, inv), dtype=float)
    finite_lo = np.isfinite(prog.lb)
    finite_hi = np.isfinite(prog.ub)
    diag = np.zeros(n)
    diag[finite_lo] += 1.0 / (x[finite_lo] - prog.lb[finite_lo]) ** 2
    diag[finite_hi] += 1.0 / (prog.ub[finite_hi] - x[finite_hi]) ** 2
    h[np.diag_indices(n)] += diag
    return h


def _boundary_step_cap(prog, x, direction, c, jac) -> float:
    """Largest sensible initial step: 90% of the linearized distance to the
    nearest constraint/box face along the direction. Keeps Newton from
    pinning iterates against the boundary at large barrier weight."""
    cap = 1.0
    if c.size:
        rate = jac @ direction
        grow = rate > 1e-14
        if grow.any():
            cap = min(cap, 0.9 * float(np.min(-c[grow] / rate[grow])))
    up = direction > 1e-14
    dn = direction < -1e-14
    if up.any():
        gap = prog.ub[up] - x[up]
        cap = min(cap, 0.9 * float(np.min(gap / direction[up])))
    if dn.any():
        gap = x[dn] - prog.lb[dn]
        cap = min(cap, 0.9 * float(np.min(gap / -direction[dn])))
    return max(cap, 0.0)


def _line_search(prog, x, direction, t, phi0, slope, budget, step0=1.0):
    step = min(1.0, step0)
    if step <= 0.0:
        return None, phi0, np.nan, 0.0
    for _ in range(_MAX_BACKTRACK):
        cand = x + step * direction
        phi, f = _barrier_value(prog, cand, t)
        if np.isfinite(phi) and phi <= phi0 + _ARMIJO * step * slope:
            return cand, phi, f, step
        step *= 0.5
        if step * float(np.max(np.abs(direction), initial=0.0)) < 1e-16 * budget:
            break
    return None, phi0, np.nan, 0.0


def _kkt_at_point(prog, x, kkt_tol):
    """Least-squares multiplier test; True when x already satisfies KKT."""
    f, g = prog.objective(x)
    c, jac = _eval_constraints(prog, x)
    act_tol = 1e-7
    rows = []
    if c.size:
        for i in np.flatnonzero(c >= -act_tol):
            rows.append(jac[i])
    for j in np.flatnonzero(x - prog.lb <= act_tol):
        e = np.zeros(x.size)
        e[j] = -1.0
        rows.append(e)
    for j in np.flatnonzero(prog.ub - x <= act_tol):
        e = np.zeros(x.size)
        e[j] = 1.0
        rows.append(e)
    g = np.asarray(g, dtype=float)
    if not rows:
        return float(np.linalg.norm(g, np.inf)) <= kkt_tol
    gmat = np.stack(rows)
    lam, *_ = np.linalg.lstsq(gmat.T, -g, rcond=None)
    lam = np.maximum(lam, 0.0)
    resid = g + gmat.T @ lam
    return float(np.linalg.norm(resid, np.inf)) <= kkt_tol


def _pull_interior(prog, x0):
    """Move a boundary start well inside along the anchor direction.

    A healthy pull matters: Newton steps crawl when the start hugs the
    boundary. The best-iterate bookkeeping protects the caller from the
    objective loss of the detour.
    """
    if prog.interior_anchor is None:
        if _strictly_feasible(prog, x0):
            return x0
        raise SolverError("starting point is on the boundary and no interior anchor given")
    anchor = np.asarray(prog.interior_anchor, dtype=float)
    if not _strictly_feasible(prog, anchor):
        if _strictly_feasible(prog, x0):
            return x0
        raise SolverError("interior_anchor is not strictly feasible")
    for t in (0.01, 1e-3, 1e-4):
        cand = x0 + t * (anchor - x0)
        if _strictly_feasible(prog, cand):
            return cand
    return anchor


def solve_smooth(prog: SmoothConvexProgram, kkt_tol: float = 1e-5,
                 iter_cap: int = 500) -> SolveReport:
    """Barrier solve; returns the best feasible iterate with KKT diagnostics."""
    t_start = time.perf_counter()
    x0 = prog.x0
    if _violation(prog, x0) > 1e-9:
        raise SolverError("solve_smooth requires a feasible starting point")

    f0, _ = prog.objective(x0)
    best_x, best_f = x0.copy(), float(f0)

    if _kkt_at_point(prog, x0, kkt_tol):
        return SolveReport("optimal", best_f, best_x, _violation(prog, x0),
                           0.0, 1, time.perf_counter() - t_start)

    m_total = 0
    if prog.constraints is not None:
        c0, _ = _eval_constraints(prog, x0)
        m_total += c0.size
    m_total += int(np.isfinite(prog.lb).sum() + np.isfinite(prog.ub).sum())

    x = _pull_interior(prog, x0)
    use_newton = prog.newton_ready
    iterations = 0
    kkt_resid = np.inf

    t = 1.0 if m_total == 0 else max(1.0, m_total / max(1.0, abs(best_f)))

    # Memory for the L-BFGS fallback.
    mem_s: list[np.ndarray] = []
    mem_y: list[np.ndarray] = []
    stage_iters = 0
    stage_cap = 80 if use_newton else 200

    damping = 0.0                   # Levenberg blend toward steepest descent
    fail_streak = 0

    def advance_stage():
        nonlocal t, stage_iters, damping, fail_streak
        t *= _BARRIER_MU
        mem_s.clear()
        mem_y.clear()
        stage_iters = 0
        damping = 0.0
        fail_streak = 0

    while iterations < iter_cap:
        grad, f, c, jac = _barrier_grad(prog, x, t)
        stat_res = float(np.linalg.norm(grad, np.inf)) / t
        gap = m_total / t if m_total else 0.0
        final_stage = gap <= 0.5 * kkt_tol

        if final_stage and stat_res <= 0.5 * kkt_tol:
            kkt_resid = max(stat_res, gap)
            break

        iterations += 1
        stage_iters += 1
        if use_newton:
            h = _barrier_hess(prog, x, t, c, jac)
            if damping > 0.0:
                # Bend toward steepest descent: the pure Newton model is
                # unreliable against steep (exp-like) constraint walls.
                h = h + damping * max(1.0, float(np.trace(h)) / h.shape[0]) * np.eye(h.shape[0])
            try:
                direction = np.linalg.solve(h, -grad)
            except np.linalg.LinAlgError:
                h[np.diag_indices(x.size)] += 1e-8 * (1.0 + np.abs(np.diag(h)))
                direction = np.linalg.solve(h, -grad)
            if grad @ direction > 0:
                direction = -grad
        else:
            direction = _lbfgs_direction(grad, mem_s, mem_y)

        phi0, _ = _barrier_value(prog, x, t)
        slope = float(grad @ direction)
        if slope > 0:
            direction = -grad
            slope = float(grad @ direction)

        # Intermediate stages only need the Newton decrement down; full
        # stationarity is only required once the barrier gap is at target.
        decrement_sq = -slope
        if not final_stage and damping == 0.0 \
                and (decrement_sq <= 1e-9 * (1.0 + abs(phi0))
                     or stage_iters > stage_cap):
            kkt_resid = max(stat_res, gap)
            advance_stage()
            continue

        scale = max(1.0, float(np.linalg.norm(x)))
        step0 = _boundary_step_cap(prog, x, direction, c, jac)
        cand, phi, f_new, step = _line_search(prog, x, direction, t, phi0, slope, scale, step0)

        if cand is None or step * step0 < 1e-3:
            fail_streak += 1
            damping = 10.0 * damping if damping > 0.0 else 1e-4
            if fail_streak > 12:
                kkt_resid = max(stat_res, gap)
                if m_total == 0 or final_stage:
                    break
                advance_stage()
                continue
            if cand is None:
                continue
        else:
            fail_streak = 0
            if step >= 0.5:
                damping = 0.0 if damping < 1e-10 else damping / 10.0

        if not use_newton:
            g_new = _barrier_grad(prog, cand, t)[0]
            s_vec, y_vec = cand - x, g_new - grad
            if s_vec @ y_vec > 1e-12:
                mem_s.append(s_vec)
                mem_y.append(y_vec)
                if len(mem_s) > 10:
                    mem_s.pop(0)
                    mem_y.pop(0)
        x = cand
        if np.isfinite(f_new) and f_new < best_f and _violation(prog, x) <= 1e-9:
            best_f, best_x = float(f_new), x.copy()

    wall = time.perf_counter() - t_start
    grad, f, c, jac = _barrier_grad(prog, x, t)
    stat_res = float(np.linalg.norm(grad, np.inf)) / t
    gap = m_total / t if m_total else 0.0
    kkt_resid = max(stat_res, gap) if m_total else stat_res
    if np.isfinite(f) and f < best_f and _violation(prog, x) <= 1e-9:
        best_f, best_x = float(f), x.copy()

    lam = 1.0 / (t * (-c)) if c.size else np.zeros(0)
    status = "optimal" if kkt_resid <= kkt_tol else "iteration_cap"
    return SolveReport(status, best_f, best_x, _violation(prog, best_x),
                       kkt_resid, max(iterations, 1), wall, dual_ineq=lam)


def _lbfgs_direction(grad, mem_s, mem_y):
    q = -grad.copy()
    if not mem_s:
        return q
    alphas = []
    for s, y in zip(reversed(mem_s), reversed(mem_y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho, s, y))
        q -= a * y
    s_last, y_last = mem_s[-1], mem_y[-1]
    q *= (s_last @ y_last) / (y_last @ y_last)
    for a, rho, s, y in reversed(alphas):
        b = rho * (y @ q)
        q += (a - b) * s
    return q
