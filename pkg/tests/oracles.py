"""Independent brute-force oracles used to pin expected values.

These deliberately avoid the production solvers: LP optima come from
exhaustive enumeration (per-slot assignment patterns with time-sharing for
the scheduling structure, and basic-solution enumeration for general small
LPs), and continuous optima from hierarchically refined grid search.
"""

from itertools import combinations, product

import numpy as np


def schedule_maxmin_by_patterns(rates: np.ndarray) -> float:
    """Exact fractional max-min scheduling value for K <= 2 sensors.

    Every fractional schedule is a per-slot convex combination of the binary
    assignment patterns (slot -> sensor or idle), so the achievable per-sensor
    average-rate vectors form the convex hull of the pattern vectors. For two
    sensors the max-min over that hull is attained at a pattern or on the
    time-sharing segment between two patterns where both rates are equal.
    """
    k, n = rates.shape
    assert k <= 2
    pats = []
    for assign in product(range(k + 1), repeat=n):           # 0 = idle
        vec = np.zeros(k)
        for slot, a in enumerate(assign):
            if a > 0:
                vec[a - 1] += rates[a - 1, slot]
        pats.append(vec / n)
    pats = np.asarray(pats)
    if k == 1:
        return float(pats.max())

    best = float(np.min(pats, axis=1).max())
    for i in range(len(pats)):
        p1, p2 = pats[i]
        for j in range(i + 1, len(pats)):
            q1, q2 = pats[j]
            denom = (p1 - p2) - (q1 - q2)
            if abs(denom) < 1e-15:
                continue
            lam = (q2 - q1) / denom
            if 0.0 <= lam <= 1.0:
                v1 = lam * p1 + (1 - lam) * q1
                v2 = lam * p2 + (1 - lam) * q2
                best = max(best, min(v1, v2))
    return best


def lp_max_by_vertex_enumeration(c, a_ub, b_ub, lb, ub) -> float:
    """Maximize c'x over {A x <= b, lb <= x <= ub} by enumerating all basic
    solutions (active-set combinations). Exponential; small instances only."""
    c = np.asarray(c, dtype=float)
    n = c.size
    rows = [np.asarray(a_ub, dtype=float)] if a_ub is not None else []
    rhs = [np.asarray(b_ub, dtype=float)] if b_ub is not None else []
    eye = np.eye(n)
    finite_lb = np.isfinite(lb)
    finite_ub = np.isfinite(ub)
    if finite_lb.any():
        rows.append(-eye[finite_lb])
        rhs.append(-np.asarray(lb)[finite_lb])
    if finite_ub.any():
        rows.append(eye[finite_ub])
        rhs.append(np.asarray(ub)[finite_ub])
    g = np.vstack(rows)
    h = np.concatenate(rhs)
    m = g.shape[0]

    best = -np.inf
    combos = list(combinations(range(m), n))
    g_sets = np.stack([g[list(idx)] for idx in combos])
    h_sets = np.stack([h[list(idx)] for idx in combos])
    dets = np.abs(np.linalg.det(g_sets))
    ok = dets > 1e-10
    if ok.any():
        x = np.full((len(combos), n), np.nan)
        x[ok] = np.linalg.solve(g_sets[ok], h_sets[ok][..., None])[..., 0]
        feas = ok & np.all(g @ x.T <= h[:, None] + 1e-8, axis=0)
        if feas.any():
            best = float(np.max(x[feas] @ c))
    return best


def grid_search_2d(f, center, radius, tol=1e-3):
    """Hierarchically refined grid maximization of f over a square, restricted
    to the disc of the given radius (resolution refined down to ``tol``)."""
    best_pt = np.asarray(center, dtype=float)
    best_val = f(best_pt)
    span = radius
    while span > tol / 4:
        xs = np.linspace(best_pt[0] - span, best_pt[0] + span, 21)
        ys = np.linspace(best_pt[1] - span, best_pt[1] + span, 21)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        keep = np.linalg.norm(pts - np.asarray(center), axis=1) <= radius
        pts = pts[keep]
        vals = np.array([f(p) for p in pts])
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = float(vals[i])
            best_pt = pts[i]
        span /= 5.0
    return best_pt, best_val


def grid_search_1d(f, lo, hi, tol=1e-3):
    """Refined 1D grid maximization over [lo, hi]."""
    best_x, best_val = lo, f(lo)
    span = hi - lo
    center = (lo + hi) / 2
    while span > tol / 4:
        xs = np.clip(np.linspace(center - span / 2, center + span / 2, 41), lo, hi)
        vals = np.array([f(x) for x in xs])
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = float(vals[i])
            best_x = float(xs[i])
        center = best_x
        span /= 10.0
    return best_x, best_val
