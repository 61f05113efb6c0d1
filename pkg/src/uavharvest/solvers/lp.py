"""Dense revised simplex with bounded variables and Bland anti-cycling.

Solves  max/min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub.

Internally every row gets a slack (equality slacks are pinned to zero) and a
two-phase scheme with artificial columns finds a starting basis. Pricing is
Dantzig's rule with lowest-index tie-breaking; after a run of degenerate
pivots the solver switches to Bland's rule until the objective strictly
improves, which both prevents cycling and makes tie-breaking deterministic.
Problem sizes here stay in the hundreds of variables, so the basis inverse is
kept explicitly and refactorized periodically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .base import SolveReport, SolverError

# Nonbasic variable statuses.
_AT_LB = 0
_AT_UB = 1
_FREE = 2
_BASIC = 3

_PIVOT_TOL = 1e-10
_REFACTOR_EVERY = 100


@dataclass
class LinearProgram:
    """A dense LP in inequality/equality/bounds form; objective sense ``max``
    by default (both scheduling programs are maximizations)."""

    c: np.ndarray
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    maximize: bool = True

    n: int = field(init=False)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.n = self.c.size
        if self.a_ub is not None:
            self.a_ub = np.atleast_2d(np.asarray(self.a_ub, dtype=float))
            self.b_ub = np.atleast_1d(np.asarray(self.b_ub, dtype=float))
            if self.a_ub.shape != (self.b_ub.size, self.n):
                raise SolverError("a_ub/b_ub dimensions inconsistent with c")
        if self.a_eq is not None:
            self.a_eq = np.atleast_2d(np.asarray(self.a_eq, dtype=float))
            self.b_eq = np.atleast_1d(np.asarray(self.b_eq, dtype=float))
            if self.a_eq.shape != (self.b_eq.size, self.n):
                raise SolverError("a_eq/b_eq dimensions inconsistent with c")
        self.lb = np.full(self.n, -np.inf) if self.lb is None \
            else np.asarray(self.lb, dtype=float).copy()
        self.ub = np.full(self.n, np.inf) if self.ub is None \
            else np.asarray(self.ub, dtype=float).copy()
        if self.lb.size != self.n or self.ub.size != self.n:
            raise SolverError("bound arrays must match the variable count")
        if np.any(self.lb > self.ub + 1e-12):
            raise SolverError("lower bound exceeds upper bound")
        for arr in (self.c, self.a_ub, self.b_ub, self.a_eq, self.b_eq):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise SolverError("matrix/objective coefficients must be finite")

    def to_debug_json(self) -> str:
        """Dump the program for offline inspection."""
        import json

        def enc(a):
            return None if a is None else np.asarray(a).tolist()

        return json.dumps({
            "c": enc(self.c), "a_ub": enc(self.a_ub), "b_ub": enc(self.b_ub),
            "a_eq": enc(self.a_eq), "b_eq": enc(self.b_eq),
            "lb": enc(self.lb), "ub": enc(self.ub), "maximize": self.maximize,
        }, indent=2)


class _Tableau:
    """Bounded-variable revised simplex state over columns [x | slacks | artificials]."""

    def __init__(self, a: np.ndarray, b: np.ndarray, lb: np.ndarray, ub: np.ndarray):
        self.a = a
        self.b = b
        self.lb = lb
        self.ub = ub
        self.m, self.n_total = a.shape
        self.status = np.empty(self.n_total, dtype=np.int8)
        self.x = np.zeros(self.n_total)
        self.basis = np.empty(self.m, dtype=int)
        self.binv = np.eye(self.m)
        self.pivots_since_refactor = 0

    def set_nonbasic_start(self, j: int) -> None:
        lo, hi = self.lb[j], self.ub[j]
        if np.isfinite(lo) and (abs(lo) <= abs(hi) or not np.isfinite(hi)):
            self.status[j], self.x[j] = _AT_LB, lo
        elif np.isfinite(hi):
            self.status[j], self.x[j] = _AT_UB, hi
        else:
            self.status[j], self.x[j] = _FREE, 0.0

    def refactor(self) -> None:
        self.binv = np.linalg.inv(self.a[:, self.basis])
        self.pivots_since_refactor = 0

    def recompute_basics(self) -> None:
        nonbasic_mask = self.status != _BASIC
        rhs = self.b - self.a[:, nonbasic_mask] @ self.x[nonbasic_mask]
        self.x[self.basis] = self.binv @ rhs

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        y = cost[self.basis] @ self.binv
        return cost - y @ self.a

    def duals(self, cost: np.ndarray) -> np.ndarray:
        return cost[self.basis] @ self.binv


def _choose_entering(d: np.ndarray, status: np.ndarray, fixed: np.ndarray,
                     tol: float, bland: bool) -> tuple[int, int] | None:
    """Entering column and direction (+1 increase / -1 decrease), or None."""
    up = ((status == _AT_LB) | (status == _FREE)) & (d < -tol) & ~fixed
    dn = ((status == _AT_UB) | (status == _FREE)) & (d > tol) & ~fixed
    if not up.any() and not dn.any():
        return None
    if bland:
        idx_up = np.argmax(up) if up.any() else np.iinfo(int).max
        idx_dn = np.argmax(dn) if dn.any() else np.iinfo(int).max
        if idx_up <= idx_dn:
            return int(idx_up), +1
        return int(idx_dn), -1
    score = np.where(up, -d, 0.0) + np.where(dn, d, 0.0)
    j = int(np.argmax(score))
    return j, (+1 if up[j] else -1)


def _simplex_loop(tab: _Tableau, cost: np.ndarray, fixed: np.ndarray,
                  tol: float, max_iter: int, iter_offset: int = 0) -> tuple[str, int]:
    """Run pivots until optimality/unboundedness/iteration cap."""
    m = tab.m
    bland = False
    stall = 0
    stall_limit = 2 * m + 50
    it = iter_offset
    obj_prev = float(cost @ tab.x)

    while it < max_iter:
        it += 1
        d = tab.reduced_costs(cost)
        pick = _choose_entering(d, tab.status, fixed, tol, bland)
        if pick is None:
            return "optimal", it
        j, direction = pick

        w = tab.binv @ tab.a[:, j]
        # Ratio test: blocking basic variables plus the entering bound flip.
        step_limit = np.inf
        leave_pos = -1
        leave_to = _AT_LB
        dw = direction * w
        xb = tab.x[tab.basis]
        with np.errstate(divide="ignore", invalid="ignore"):
            lo_gap = xb - tab.lb[tab.basis]
            hi_gap = tab.ub[tab.basis] - xb
            ratios_dec = np.where(dw > _PIVOT_TOL, lo_gap / np.where(dw > _PIVOT_TOL, dw, 1.0), np.inf)
            ratios_inc = np.where(dw < -_PIVOT_TOL, hi_gap / np.where(dw < -_PIVOT_TOL, -dw, 1.0), np.inf)
        ratios = np.minimum(ratios_dec, ratios_inc)
        ratios = np.maximum(ratios, 0.0)
        if ratios.size:
            best = np.min(ratios)
            if best < step_limit:
                # Lowest variable index among ties keeps pivoting deterministic
                # and Bland-compatible.
                tied = np.flatnonzero(ratios <= best + 1e-12)
                leave_pos = int(tied[np.argmin(tab.basis[tied])])
                step_limit = float(best)
                leave_to = _AT_LB if ratios_dec[leave_pos] <= ratios_inc[leave_pos] else _AT_UB

        flip_gap = tab.ub[j] - tab.lb[j]
        flip = np.isfinite(flip_gap) and flip_gap < step_limit
        if flip:
            step_limit = float(flip_gap)
            leave_pos = -1

        if not np.isfinite(step_limit):
            return "unbounded", it

        # Apply the step.
        tab.x[tab.basis] -= direction * step_limit * w
        tab.x[j] += direction * step_limit

        improve = obj_prev - float(cost @ tab.x)
        obj_now = obj_prev - improve
        if improve > 1e-12 * max(1.0, abs(obj_prev)):
            bland = False
            stall = 0
        else:
            stall += 1
            if stall >= stall_limit:
                bland = True
        obj_prev = obj_now

        if flip:
            tab.status[j] = _AT_UB if tab.status[j] == _AT_LB else _AT_LB
            tab.x[j] = tab.ub[j] if tab.status[j] == _AT_UB else tab.lb[j]
            continue

        # Basis exchange.
        out_var = tab.basis[leave_pos]
        tab.status[out_var] = leave_to
        tab.x[out_var] = tab.lb[out_var] if leave_to == _AT_LB else tab.ub[out_var]
        tab.status[j] = _BASIC
        tab.basis[leave_pos] = j

        piv = w[leave_pos]
        if abs(piv) < _PIVOT_TOL:
            tab.refactor()
            tab.recompute_basics()
            continue
        eta = -w / piv
        eta[leave_pos] = 1.0 / piv
        row = tab.binv[leave_pos].copy()
        tab.binv += np.outer(eta, row)
        tab.binv[leave_pos] = row / piv
        tab.pivots_since_refactor += 1
        if tab.pivots_since_refactor >= _REFACTOR_EVERY:
            tab.refactor()
            tab.recompute_basics()

    return "iteration_cap", it


def solve_lp(lp: LinearProgram, feas_tol: float = 1e-7,
             max_iter: int | None = None) -> SolveReport:
    """Solve an LP to an optimal basic solution or an infeasibility verdict."""
    t0 = time.perf_counter()
    n = lp.n
    m_ub = 0 if lp.a_ub is None else lp.a_ub.shape[0]
    m_eq = 0 if lp.a_eq is None else lp.a_eq.shape[0]
    m = m_ub + m_eq
    c_int = (-lp.c if lp.maximize else lp.c).astype(float)

    blocks = []
    rhs = []
    if m_ub:
        blocks.append(lp.a_ub)
        rhs.append(lp.b_ub)
    if m_eq:
        blocks.append(lp.a_eq)
        rhs.append(lp.b_eq)
    a_struct = np.vstack(blocks) if blocks else np.zeros((0, n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)

    # Columns: structural | slacks (eq slacks pinned to 0) | artificials (later).
    a = np.hstack([a_struct, np.eye(m)]) if m else a_struct.copy()
    lb = np.concatenate([lp.lb, np.zeros(m)])
    ub = np.concatenate([lp.ub, np.concatenate([np.full(m_ub, np.inf), np.zeros(m_eq)])
                         if m else np.zeros(0)])

    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    tab = _Tableau(a, b, lb, ub)
    for j in range(n):
        tab.set_nonbasic_start(j)
    tab.basis = np.arange(n, n + m)
    tab.status[n:] = _BASIC
    tab.recompute_basics()

    # Phase 1: replace out-of-bounds slacks with artificials.
    viol_lo = tab.x[tab.basis] < tab.lb[tab.basis] - feas_tol
    viol_hi = tab.x[tab.basis] > tab.ub[tab.basis] + feas_tol
    art_rows = np.flatnonzero(viol_lo | viol_hi)
    iterations = 0
    if art_rows.size:
        resid = np.zeros(m)
        for i in art_rows:
            slack = tab.basis[i]
            target = tab.lb[slack] if viol_lo[i] else tab.ub[slack]
            resid[i] = tab.x[slack] - target
            tab.status[slack] = _AT_LB if viol_lo[i] else _AT_UB
            tab.x[slack] = target
        art_cols = np.zeros((m, art_rows.size))
        for k, i in enumerate(art_rows):
            art_cols[i, k] = np.sign(resid[i])
        a_full = np.hstack([tab.a, art_cols])
        lb_full = np.concatenate([tab.lb, np.zeros(art_rows.size)])
        ub_full = np.concatenate([tab.ub, np.full(art_rows.size, np.inf)])
        tab2 = _Tableau(a_full, b, lb_full, ub_full)
        tab2.status[:tab.n_total] = tab.status
        tab2.x[:tab.n_total] = tab.x
        tab2.basis = tab.basis.copy()
        for k, i in enumerate(art_rows):
            tab2.basis[i] = tab.n_total + k
            tab2.status[tab.n_total + k] = _BASIC
            tab2.x[tab.n_total + k] = abs(resid[i])
        tab2.refactor()
        tab2.recompute_basics()

        cost1 = np.zeros(tab2.n_total)
        cost1[tab.n_total:] = 1.0
        fixed1 = lb_full == ub_full
        status1, iterations = _simplex_loop(tab2, cost1, fixed1, 1e-9, max_iter)
        phase1_obj = float(cost1 @ tab2.x)
        if status1 == "iteration_cap":
            return SolveReport("iteration_cap", np.nan, tab2.x[:n].copy(),
                               np.inf, np.inf, iterations,
                               time.perf_counter() - t0)
        if phase1_obj > 10 * feas_tol:
            return SolveReport("infeasible", np.nan, tab2.x[:n].copy(),
                               phase1_obj, np.inf, iterations,
                               time.perf_counter() - t0)
        # Freeze artificials at zero for phase 2.
        tab2.lb[tab.n_total:] = 0.0
        tab2.ub[tab.n_total:] = 0.0
        tab2.x[tab.n_total:][tab2.status[tab.n_total:] != _BASIC] = 0.0
        tab = tab2

    cost2 = np.zeros(tab.n_total)
    cost2[:n] = c_int
    fixed2 = tab.lb == tab.ub
    status, iterations = _simplex_loop(tab, cost2, fixed2, 1e-9, max_iter,
                                       iter_offset=iterations)
    wall = time.perf_counter() - t0
    x = tab.x[:n].copy()

    if status == "unbounded":
        return SolveReport("unbounded", np.inf if lp.maximize else -np.inf, x,
                           0.0, np.inf, iterations, wall)

    obj = float(lp.c @ x)
    max_violation = _primal_violation(lp, x)
    y = tab.duals(cost2)
    dual_ineq = -y[:m_ub] if m_ub else np.zeros(0)
    dual_eq = -y[m_ub:m] if m_eq else np.zeros(0)
    if not lp.maximize:
        dual_ineq, dual_eq = -dual_ineq, -dual_eq

    d = tab.reduced_costs(cost2)[:n]
    dual_infeas = 0.0
    at_lb = tab.status[:n] == _AT_LB
    at_ub = tab.status[:n] == _AT_UB
    free = tab.status[:n] == _FREE
    basic = tab.status[:n] == _BASIC
    if at_lb.any():
        dual_infeas = max(dual_infeas, float(np.max(np.maximum(-d[at_lb], 0.0), initial=0.0)))
    if at_ub.any():
        dual_infeas = max(dual_infeas, float(np.max(np.maximum(d[at_ub], 0.0), initial=0.0)))
    if free.any() or basic.any():
        dual_infeas = max(dual_infeas, float(np.max(np.abs(d[free | basic]), initial=0.0)))

    if status == "optimal" and max_violation > feas_tol:
        # Numerical drift beyond tolerance: refactor once and recheck.
        tab.refactor()
        tab.recompute_basics()
        x = tab.x[:n].copy()
        obj = float(lp.c @ x)
        max_violation = _primal_violation(lp, x)

    return SolveReport(
        status=status,
        objective=obj,
        x=x,
        max_violation=max_violation,
        kkt_residual=dual_infeas,
        iterations=iterations,
        wall_time=wall,
        dual_ineq=dual_ineq,
        dual_eq=dual_eq,
    )


def _primal_violation(lp: LinearProgram, x: np.ndarray) -> float:
    v = 0.0
    if lp.a_ub is not None:
        v = max(v, float(np.max(np.maximum(lp.a_ub @ x - lp.b_ub, 0.0), initial=0.0)))
    if lp.a_eq is not None:
        v = max(v, float(np.max(np.abs(lp.a_eq @ x - lp.b_eq), initial=0.0)))
    v = max(v, float(np.max(np.maximum(lp.lb - x, 0.0), initial=0.0)))
    v = max(v, float(np.max(np.maximum(x - lp.ub, 0.0), initial=0.0)))
    return v


def dual_objective(lp: LinearProgram, dual_ineq: np.ndarray,
                   dual_eq: np.ndarray, red_tol: float = 1e-9) -> float:
    """Evaluate the bound-aware dual objective at the reported multipliers.

    For the maximization form the dual is
        min b_ub'y + b_eq'mu + sum_j max_{x_j in [l_j, u_j]} (c - A'y - A_eq'mu)_j x_j
    with y >= 0; weak duality holds for any feasible multipliers, so agreement
    with the primal objective certifies optimality. Reduced gains with
    magnitude below ``red_tol`` (times the objective scale) are snapped to
    zero so roundoff cannot turn an unbounded variable's term into infinity.
    """
    sign = 1.0 if lp.maximize else -1.0
    c = sign * lp.c
    red = c.copy()
    val = 0.0
    if lp.a_ub is not None:
        red -= lp.a_ub.T @ (sign * dual_ineq)
        val += float(lp.b_ub @ (sign * dual_ineq))
    if lp.a_eq is not None:
        red -= lp.a_eq.T @ (sign * dual_eq)
        val += float(lp.b_eq @ (sign * dual_eq))
    red[np.abs(red) <= red_tol * max(1.0, float(np.max(np.abs(lp.c))))] = 0.0
    hi = np.where(red > 0, red, 0.0)
    lo = np.where(red < 0, red, 0.0)
    with np.errstate(invalid="ignore"):
        val += float(np.sum(np.where(hi > 0, hi * lp.ub, 0.0)))
        val += float(np.sum(np.where(lo < 0, lo * lp.lb, 0.0)))
    return sign * val
