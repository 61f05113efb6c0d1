"""Pre-flight 3D trajectory and scheduling optimizer.

Starting from a straight-line path, a block-coordinate loop alternates three
blocks until the max-min LoS-only expected rate stops improving: a scheduling
LP over fractional slot shares, a horizontal trajectory step, and a vertical
trajectory step. The two trajectory blocks maximize first-order minorants of
the rate (tight at the current iterate), so each accepted step keeps the true
objective non-decreasing; a cheap recheck rejects the rare vertical step where
the linearized elevation angle overshoots. The final fractional schedule is
quantized to one transmitter per slot by largest-deficit rounding.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelParams, DEG_PER_RAD, expected_rate_lb
from .solvers import SmoothConvexProgram, LinearProgram, SolveReport, solve_lp, solve_smooth

_SPEED_TOL = 1e-6     # meters of slack allowed when validating kinematics
_DIST_FLOOR = 1e-3    # horizontal-distance floor keeping angle slopes finite

# Floor slack allowed while polishing degenerate block optima: waypoints
# serving non-bottleneck sensors have no pull toward their rate-optimal
# positions (any point in a flat region maximizes the floor), so after each
# max-min solve a second pass maximizes the mean rate subject to the achieved
# floor. The polish result is kept only when the true floor did not drop.
_POLISH_SLACK = 1e-4


class MissionError(ValueError):
    """Raised for inconsistent mission configurations or infeasible paths."""


def choose_slot_count(t_total: float, v_xy_max: float, v_z_max: float,
                      h_min: float, eps_max: float) -> int:
    """Slot count from the discretization threshold: the per-slot travel
    distance may not exceed ``eps_max`` times the minimum altitude."""
    if min(t_total, v_xy_max, v_z_max, h_min, eps_max) <= 0:
        raise MissionError("slot-count inputs must be positive")
    raw = t_total * max(v_xy_max, v_z_max) / (h_min * eps_max)
    return max(1, math.ceil(raw - 1e-9))


@dataclass(frozen=True)
class MissionConfig:
    """Discretized mission: duration, slot grid, endpoints and kinematic caps."""

    t_total: float
    n_slots: int
    slot_len: float
    q_start: tuple[float, float]
    q_end: tuple[float, float]
    z_start: float
    z_end: float
    v_xy_max: float
    v_z_max: float
    h_min: float
    h_max: float
    eps_max: float
    eps_bcd: float

    def __post_init__(self):
        if abs(self.n_slots * self.slot_len - self.t_total) > 1e-9 * max(1.0, self.t_total):
            raise MissionError("n_slots * slot_len must equal t_total")
        if not (self.h_min <= self.z_start <= self.h_max
                and self.h_min <= self.z_end <= self.h_max):
            raise MissionError("endpoint altitudes must lie within [h_min, h_max]")
        if self.h_min <= 0 or self.h_max < self.h_min:
            raise MissionError("need 0 < h_min <= h_max")
        horiz = math.dist(self.q_start, self.q_end)
        if horiz / self.n_slots > self.step_xy + _SPEED_TOL:
            raise MissionError("straight-line path violates the horizontal speed cap")
        if abs(self.z_end - self.z_start) / self.n_slots > self.step_z + _SPEED_TOL:
            raise MissionError("straight-line path violates the vertical speed cap")

    @property
    def step_xy(self) -> float:
        return self.v_xy_max * self.slot_len

    @property
    def step_z(self) -> float:
        return self.v_z_max * self.slot_len

    @staticmethod
    def build(t_total: float, *, q_start, q_end, z_start, z_end, v_xy_max,
              v_z_max, h_min, h_max, eps_max, eps_bcd) -> "MissionConfig":
        n = choose_slot_count(t_total, v_xy_max, v_z_max, h_min, eps_max)
        return MissionConfig(
            t_total=t_total, n_slots=n, slot_len=t_total / n,
            q_start=tuple(q_start), q_end=tuple(q_end),
            z_start=z_start, z_end=z_end, v_xy_max=v_xy_max, v_z_max=v_z_max,
            h_min=h_min, h_max=h_max, eps_max=eps_max, eps_bcd=eps_bcd,
        )

    def to_json(self) -> str:
        doc = {k: getattr(self, k) for k in (
            "t_total", "n_slots", "slot_len", "z_start", "z_end", "v_xy_max",
            "v_z_max", "h_min", "h_max", "eps_max", "eps_bcd")}
        doc["q_start"] = list(self.q_start)
        doc["q_end"] = list(self.q_end)
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "MissionConfig":
        doc = json.loads(text)
        doc["q_start"] = tuple(doc["q_start"])
        doc["q_end"] = tuple(doc["q_end"])
        return MissionConfig(**doc)


@dataclass(frozen=True)
class Trajectory:
    """Ordered 3D waypoints, one more than the slot count."""

    q: np.ndarray        # (N+1, 2)
    z: np.ndarray        # (N+1,)

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        if self.q.ndim != 2 or self.q.shape[1] != 2 or self.z.shape != (self.q.shape[0],):
            raise MissionError("trajectory arrays must be (N+1, 2) and (N+1,)")

    @property
    def n_slots(self) -> int:
        return self.q.shape[0] - 1

    def validate(self, cfg: MissionConfig) -> None:
        if self.n_slots != cfg.n_slots:
            raise MissionError("trajectory length does not match the slot count")
        if not (np.allclose(self.q[0], cfg.q_start, atol=_SPEED_TOL)
                and np.allclose(self.q[-1], cfg.q_end, atol=_SPEED_TOL)):
            raise MissionError("horizontal endpoints are not pinned")
        if abs(self.z[0] - cfg.z_start) > _SPEED_TOL or abs(self.z[-1] - cfg.z_end) > _SPEED_TOL:
            raise MissionError("vertical endpoints are not pinned")
        steps = np.linalg.norm(np.diff(self.q, axis=0), axis=1)
        if np.any(steps > cfg.step_xy + _SPEED_TOL):
            raise MissionError("horizontal speed constraint violated")
        if np.any(np.abs(np.diff(self.z)) > cfg.step_z + _SPEED_TOL):
            raise MissionError("vertical speed constraint violated")
        if np.any(self.z < cfg.h_min - _SPEED_TOL) or np.any(self.z > cfg.h_max + _SPEED_TOL):
            raise MissionError("altitude corridor violated")

    def to_json(self) -> str:
        pts = [[float(x), float(y), float(h)] for (x, y), h in zip(self.q, self.z)]
        return json.dumps({"waypoints": pts}, indent=2)

    @staticmethod
    def from_json(text: str) -> "Trajectory":
        pts = np.asarray(json.loads(text)["waypoints"], dtype=float)
        return Trajectory(pts[:, :2], pts[:, 2])


def init_trajectory(cfg: MissionConfig) -> Trajectory:
    """Straight flight from start to end at uniform speed."""
    frac = np.linspace(0.0, 1.0, cfg.n_slots + 1)
    q = np.asarray(cfg.q_start) + frac[:, None] * (np.asarray(cfg.q_end) - np.asarray(cfg.q_start))
    z = cfg.z_start + frac * (cfg.z_end - cfg.z_start)
    traj = Trajectory(q, z)
    traj.validate(cfg)
    return traj


def rate_lb_matrix(traj: Trajectory, sensors: np.ndarray,
                   params: ChannelParams) -> np.ndarray:
    """LoS-only expected rate at each (sensor, slot); slot n uses waypoint n."""
    sensors = np.asarray(sensors, dtype=float)
    gammas = np.asarray(params.link_snr)
    q = traj.q[:-1]                                  # (N, 2)
    z = traj.z[:-1]
    out = np.empty((sensors.shape[0], q.shape[0]))
    for k, w in enumerate(sensors):
        out[k] = expected_rate_lb(q, z, w, gammas[k], params)
    return out


def schedule_eta(schedule: np.ndarray, rates: np.ndarray) -> float:
    """Max-min objective value of a (fractional or binary) schedule."""
    n = rates.shape[1]
    return float(np.min((schedule * rates).sum(axis=1)) / n)


def schedule_rates_lp(rates: np.ndarray) -> tuple[np.ndarray, float, SolveReport]:
    """Fractional scheduling LP over an explicit (sensor, slot) rate matrix.

    Variables are the relaxed slot shares plus the common rate floor; one
    transmitter per slot becomes a unit column-sum cap.
    """
    rates = np.asarray(rates, dtype=float)
    k_n, n = rates.shape
    nv = k_n * n + 1
    c = np.zeros(nv)
    c[-1] = 1.0

    a_ub = np.zeros((k_n + n, nv))
    b_ub = np.zeros(k_n + n)
    for k in range(k_n):
        a_ub[k, k * n:(k + 1) * n] = -rates[k] / n
        a_ub[k, -1] = 1.0
    for slot in range(n):
        a_ub[k_n + slot, slot::n][:k_n] = 1.0
        b_ub[k_n + slot] = 1.0

    lb = np.zeros(nv)
    ub = np.ones(nv)
    ub[-1] = np.inf
    report = solve_lp(LinearProgram(c, a_ub, b_ub, lb=lb, ub=ub, maximize=True))
    if report.status != "optimal":
        raise MissionError(f"scheduling LP ended with status {report.status}")
    schedule = report.x[:-1].reshape(k_n, n)
    return schedule, float(report.x[-1]), report


def optimize_scheduling(traj: Trajectory, sensors: np.ndarray,
                        params: ChannelParams) -> tuple[np.ndarray, float, SolveReport]:
    """Fractional scheduling LP at a fixed trajectory."""
    return schedule_rates_lp(rate_lb_matrix(traj, sensors, params))


def reconstruct_binary_schedule(a: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Quantize fractional slot shares to one transmitter per slot.

    Walks slots in order keeping a per-sensor deficit (fractional time owed
    minus binary time granted) and hands each usable slot to the sensor with
    the largest positive deficit. All-zero columns stay unscheduled. Per-slot
    shares never exceed the column cap, so each sensor's granted slot count
    stays within one slot of its fractional total.
    """
    a = np.asarray(a, dtype=float)
    k_n, n = a.shape
    deficit = np.zeros(k_n)
    out = np.zeros_like(a)
    for slot in range(n):
        col = a[:, slot]
        deficit += col
        if col.sum() <= tol:
            continue
        k = int(np.argmax(deficit))
        if deficit[k] > tol:
            out[k, slot] = 1.0
            deficit[k] -= 1.0
    return out


def _minorant_coeffs(u_hat: np.ndarray, z: np.ndarray, gammas: np.ndarray,
                     params: ChannelParams):
    """Vectorized expansion coefficients shared by both trajectory blocks.

    ``u_hat``: (K, N) horizontal distances at the expansion point (floored);
    ``z``: broadcastable altitudes. Returns the rate value, the two minorant
    coefficients, and exp(-logit) at the expansion point.
    """
    theta = DEG_PER_RAD * np.arctan2(z, u_hat)
    logit = params.logis_bias + params.logis_slope * theta
    x_ref = 1.0 + np.exp(-logit)
    y_ref = u_hat ** 2 + z ** 2
    alpha = params.pathloss_los
    g = gammas[:, None]
    snr = g * y_ref ** (-alpha / 2.0)
    log2e = math.log2(math.e)
    prob = params.logis_offset + params.logis_scale / x_ref
    rate_ref = prob * np.log2(1.0 + snr)
    exp_coeff = params.logis_scale * log2e / x_ref ** 2 * np.log(1.0 + snr)
    sq_coeff = prob * g * (alpha / 2.0) * log2e / (y_ref * (y_ref ** (alpha / 2.0) + g))
    return rate_ref, exp_coeff, sq_coeff, np.exp(-logit)


def _first_strict(prog_check, candidates):
    for cand in candidates:
        if prog_check(cand):
            return cand
    return None


def _mean_rate_polish(x1, k_n, constraints, constraints_val, constraint_hess,
                      lb, ub, anchor, kkt_tol):
    """Second lexicographic pass: maximize the mean per-sensor average rate
    subject to the floor achieved by the max-min pass (with a small slack so
    the floor row has interior). Returns the polished x or None on failure."""
    from .solvers.smooth import _strictly_feasible

    floor = x1[-1] - _POLISH_SLACK
    row = np.zeros((1, x1.size))
    row[0, -1] = -1.0

    def c2(x):
        c, jac = constraints(x)
        return np.concatenate([c, [floor - x[-1]]]), np.vstack([jac, row])

    def c2_val(x):
        return np.concatenate([constraints_val(x), [floor - x[-1]]])

    def c2_hess(x, wts):
        return constraint_hess(x, wts[:-1])

    w0 = np.zeros(constraints_val(x1).size)
    w0[:k_n] = 1.0 / k_n

    def obj2(x):
        c, jac = constraints(x)
        val = float(c[:k_n].sum()) / k_n - x[-1]
        grad = jac[:k_n].sum(axis=0) / k_n
        grad[-1] -= 1.0
        return val, grad

    def obj2_val(x):
        return float(constraints_val(x)[:k_n].sum()) / k_n - x[-1]

    def obj2_hess(x):
        return constraint_hess(x, w0)

    anchor2 = None
    if anchor is not None:
        cand = x1 + 1e-4 * (anchor - x1)
        cand[-1] = floor + 0.5 * _POLISH_SLACK
        anchor2 = cand

    prog = SmoothConvexProgram(
        x0=x1.copy(), objective=obj2, objective_hess=obj2_hess,
        constraints=c2, constraint_hess=c2_hess, constraints_val=c2_val,
        objective_val=obj2_val, lb=lb, ub=ub, interior_anchor=anchor2,
        meta={"block": "mean-polish"},
    )
    try:
        if anchor2 is not None and not _strictly_feasible(prog, anchor2):
            prog.interior_anchor = None
        rep = solve_smooth(prog, kkt_tol=kkt_tol)
    except Exception:
        return None
    return rep.x


def optimize_horizontal(schedule: np.ndarray, traj: Trajectory, sensors: np.ndarray,
                        params: ChannelParams, cfg: MissionConfig,
                        kkt_tol: float = 1e-5) -> tuple[Trajectory, SolveReport | None]:
    """One horizontal minorant-maximization step at fixed altitude/schedule.

    The elevation logit is bounded affinely in the horizontal distance (the
    arctan tangent from below), which keeps the per-slot rate minorant concave
    in the waypoints; endpoints stay pinned and per-slot displacements live in
    squared-norm balls.
    """
    n = cfg.n_slots
    n_free = n - 1
    if n_free <= 0:
        return traj, None
    sensors = np.asarray(sensors, dtype=float)
    gammas = np.asarray(params.link_snr)
    k_n = sensors.shape[0]

    q_hat = traj.q
    z = traj.z
    w = sensors[:, None, :]                               # (K, 1, 2)

    # Coefficients for free waypoints 1..N-1 (slot n uses waypoint n).
    qf_hat = q_hat[1:n]                                   # (N-1, 2)
    zf = z[1:n][None, :]
    u_hat = np.maximum(np.linalg.norm(qf_hat[None, :, :] - w, axis=2), _DIST_FLOOR)
    rate_ref, exp_coeff, sq_coeff, exp_ref = _minorant_coeffs(u_hat, zf, gammas, params)
    ang_ref = np.arctan2(zf, u_hat)
    ang_slope = zf / (u_hat ** 2 + zf ** 2)
    # logit as an affine function of the horizontal distance u:
    # logit(u) = lin0 - lin1 * u with lin1 >= 0.
    lin1 = params.logis_slope * DEG_PER_RAD * ang_slope
    lin0 = params.logis_bias + params.logis_slope * DEG_PER_RAD * (ang_ref + ang_slope * u_hat)

    share = schedule[:, 1:n] / n                          # (K, N-1)
    const_k = schedule[:, 0] * rate_lb_matrix(traj, sensors, params)[:, 0] / n

    step_sq = cfg.step_xy ** 2
    q0 = q_hat[0]
    qN = q_hat[n]
    nv = 2 * n_free + 1

    def unpack(x):
        return x[:-1].reshape(n_free, 2), x[-1]

    def _speed_terms(qf):
        full = np.vstack([q0[None, :], qf, qN[None, :]])
        seg = np.diff(full, axis=0)                          # (N, 2)
        return seg, (seg ** 2).sum(axis=1) - step_sq

    def _rate_values(qf, eta):
        diff = qf[None, :, :] - w                            # (K, N-1, 2)
        u = np.maximum(np.linalg.norm(diff, axis=2), 1e-12)
        # Clamp the exponent: probes far outside the useful region must read
        # as hugely infeasible, not overflow into NaN via 0 * inf.
        exp_term = np.exp(np.minimum(lin1 * u - lin0, 50.0))
        s_val = rate_ref - exp_coeff * (exp_term - exp_ref) - sq_coeff * (u ** 2 - u_hat ** 2)
        c_rate = eta - (const_k + (share * s_val).sum(axis=1))
        return c_rate, diff, u, exp_term

    def constraints_val(x):
        qf, eta = unpack(x)
        c_rate, _, _, _ = _rate_values(qf, eta)
        _, c_speed = _speed_terms(qf)
        return np.concatenate([c_rate, c_speed])

    def constraints(x):
        qf, eta = unpack(x)
        c_rate, diff, u, exp_term = _rate_values(qf, eta)

        ds_du = -exp_coeff * lin1 * exp_term - 2.0 * sq_coeff * u
        grad_scale = -share * ds_du / u                      # (K, N-1)
        jac_rate = np.zeros((k_n, nv))
        jac_rate[:, :-1] = (grad_scale[:, :, None] * diff).reshape(k_n, -1)
        jac_rate[:, -1] = 1.0

        seg, c_speed = _speed_terms(qf)
        two_seg = 2.0 * seg
        jac_speed = np.zeros((n, nv))
        rows = np.arange(n)
        # Segment i runs waypoint i -> i+1; waypoint j is free for 1 <= j <= N-1
        # and maps to columns 2(j-1), 2(j-1)+1.
        head = rows[:-1]                                     # head free for i <= N-2
        jac_speed[head, 2 * head] += two_seg[head, 0]
        jac_speed[head, 2 * head + 1] += two_seg[head, 1]
        tail = rows[1:]                                      # tail free for i >= 1
        jac_speed[tail, 2 * (tail - 1)] -= two_seg[tail, 0]
        jac_speed[tail, 2 * (tail - 1) + 1] -= two_seg[tail, 1]
        return np.concatenate([c_rate, c_speed]), np.vstack([jac_rate, jac_speed])

    def constraint_hess(x, wts):
        qf, _ = unpack(x)
        diff = qf[None, :, :] - w
        u = np.maximum(np.linalg.norm(diff, axis=2), 1e-12)
        exp_term = np.exp(lin1 * u - lin0)
        ds_du = -exp_coeff * lin1 * exp_term - 2.0 * sq_coeff * u
        d2s = -exp_coeff * lin1 ** 2 * exp_term - 2.0 * sq_coeff
        wk = wts[:k_n][:, None] * share                      # (K, N-1)
        alpha_c = wk * (-d2s)                                # radial curvature
        beta_c = wk * (-ds_du) / u                           # tangential curvature
        unit = diff / u[..., None]
        blocks = np.einsum("kn,kni,knj->nij", alpha_c - beta_c, unit, unit)
        blocks += np.einsum("kn->n", beta_c)[:, None, None] * np.eye(2)[None, :, :]

        h = np.zeros((nv, nv))
        idx = 2 * np.arange(n_free)
        h[idx, idx] += blocks[:, 0, 0]
        h[idx, idx + 1] += blocks[:, 0, 1]
        h[idx + 1, idx] += blocks[:, 1, 0]
        h[idx + 1, idx + 1] += blocks[:, 1, 1]

        w_speed = wts[k_n:]
        diag = np.zeros(n_free)
        diag += 2.0 * w_speed[:-1]            # segment i, head waypoint i+1
        diag += 2.0 * w_speed[1:]             # segment i, tail waypoint i
        h[idx, idx] += diag
        h[idx + 1, idx + 1] += diag
        if n_free > 1:
            cross = -2.0 * w_speed[1:-1]      # segments with both ends free
            lo = idx[:-1]
            hi = idx[1:]
            h[lo, hi] += cross
            h[hi, lo] += cross
            h[lo + 1, hi + 1] += cross
            h[hi + 1, lo + 1] += cross
        return h

    grad_obj = np.zeros(nv)
    grad_obj[-1] = -1.0

    def objective(x):
        return -x[-1], grad_obj

    def objective_val(x):
        return -x[-1]

    def objective_hess(x):
        return np.zeros((nv, nv))

    def eta_for(qf):
        return float(-np.max(_rate_values(qf, 0.0)[0]))

    eta0 = eta_for(qf_hat)
    x0 = np.concatenate([qf_hat.ravel(), [eta0 - max(1e-3, 1e-3 * abs(eta0))]])

    straight = init_trajectory(cfg)
    anchor_q = straight.q[1:n]
    anchor = np.concatenate([anchor_q.ravel(), [eta_for(anchor_q) - 1.0]])

    prog = SmoothConvexProgram(
        x0=x0, objective=objective, objective_hess=objective_hess,
        constraints=constraints, constraint_hess=constraint_hess,
        constraints_val=constraints_val, objective_val=objective_val,
        interior_anchor=anchor,
        meta={"block": "horizontal"},
    )
    from .solvers.smooth import _strictly_feasible
    if not _strictly_feasible(prog, anchor):
        return traj, None                                   # no interior: caps pin the path
    report = solve_smooth(prog, kkt_tol=kkt_tol)

    def to_traj(x):
        qf_new, _ = unpack(x)
        cand = Trajectory(np.vstack([q0[None, :], qf_new, qN[None, :]]), z.copy())
        cand.validate(cfg)
        return cand

    def true_eta(t):
        return schedule_eta(schedule, rate_lb_matrix(t, sensors, params))

    p1 = to_traj(report.x)
    x2 = _mean_rate_polish(report.x, k_n, constraints, constraints_val,
                           constraint_hess, None, None, anchor, kkt_tol)
    e_old = true_eta(traj)
    e_p1 = true_eta(p1)
    if x2 is not None:
        p2 = to_traj(x2)
        if true_eta(p2) >= max(e_old, e_p1 - 1e-9):
            return p2, report
    if e_p1 >= e_old:
        return p1, report
    return traj, report


def optimize_vertical(schedule: np.ndarray, traj: Trajectory, sensors: np.ndarray,
                      params: ChannelParams, cfg: MissionConfig,
                      kkt_tol: float = 1e-5) -> tuple[Trajectory, SolveReport | None]:
    """One vertical minorant-maximization step at fixed horizontal path/schedule.

    The elevation angle arctan(z / horizontal distance) is concave in the
    altitude, so exp(-logit(z)) is convex and the per-slot rate minorant
    (value/exp/squared-distance tangent structure shared with the horizontal
    block) stays concave in z with the angle handled exactly. The minorant is
    therefore a global lower bound of the true rate in z, and an accepted step
    can never reduce the true objective.
    """
    n = cfg.n_slots
    n_free = n - 1
    if n_free <= 0 or cfg.h_max - cfg.h_min <= 0:
        return traj, None
    sensors = np.asarray(sensors, dtype=float)
    gammas = np.asarray(params.link_snr)
    k_n = sensors.shape[0]

    z_hat = traj.z
    zf_hat = z_hat[1:n]
    q = traj.q[1:n]
    u = np.linalg.norm(q[None, :, :] - sensors[:, None, :], axis=2)       # (K, N-1)
    rate_ref, exp_coeff, sq_coeff, exp_ref = _minorant_coeffs(u, zf_hat[None, :], gammas, params)
    slope_deg = params.logis_slope * DEG_PER_RAD

    share = schedule[:, 1:n] / n
    const_k = schedule[:, 0] * rate_lb_matrix(traj, sensors, params)[:, 0] / n

    lb_z = np.full(n_free, cfg.h_min)
    ub_z = np.full(n_free, cfg.h_max)

    # Constant jacobian of the 2N affine speed rows.
    jac_speed = np.zeros((2 * n, n_free + 1))
    rows = np.arange(n)
    head = rows[:-1]
    jac_speed[head, head] += 1.0
    jac_speed[n + head, head] -= 1.0
    tail = rows[1:]
    jac_speed[tail, tail - 1] -= 1.0
    jac_speed[n + tail, tail - 1] += 1.0

    def _exp_parts(zf):
        zb = zf[None, :]
        logit = params.logis_bias + slope_deg * np.arctan2(zb, u)
        exp_term = np.exp(-logit)
        dphi = slope_deg * u / (u ** 2 + zb ** 2)          # d(logit)/dz >= 0
        return zb, exp_term, dphi

    def _rate_values(zf, eta):
        zb, exp_term, _ = _exp_parts(zf)
        s_val = rate_ref - exp_coeff * (exp_term - exp_ref) \
            - sq_coeff * (zb ** 2 - zf_hat[None, :] ** 2)
        c_rate = eta - (const_k + (share * s_val).sum(axis=1))
        return c_rate, exp_term

    def _speed_values(zf):
        zfull = np.concatenate([[z_hat[0]], zf, [z_hat[n]]])
        seg = np.diff(zfull)
        return np.concatenate([seg - cfg.step_z, -seg - cfg.step_z])

    def constraints_val(x):
        c_rate, _ = _rate_values(x[:-1], x[-1])
        return np.concatenate([c_rate, _speed_values(x[:-1])])

    def constraints(x):
        zf, eta = x[:-1], x[-1]
        zb, exp_term, dphi = _exp_parts(zf)
        s_val = rate_ref - exp_coeff * (exp_term - exp_ref) \
            - sq_coeff * (zb ** 2 - zf_hat[None, :] ** 2)
        c_rate = eta - (const_k + (share * s_val).sum(axis=1))
        ds_dz = exp_coeff * dphi * exp_term - 2.0 * sq_coeff * zb
        jac_rate = np.zeros((k_n, n_free + 1))
        jac_rate[:, :-1] = -share * ds_dz
        jac_rate[:, -1] = 1.0
        return np.concatenate([c_rate, _speed_values(zf)]), np.vstack([jac_rate, jac_speed])

    def constraint_hess(x, wts):
        zf = x[:-1]
        zb, exp_term, dphi = _exp_parts(zf)
        # d2/dz2 exp(-logit) = exp(-logit) * (dphi^2 - d2phi), with
        # d2phi = -2 z u slope_deg / (u^2 + z^2)^2 <= 0 for z > 0.
        d2phi = -2.0 * zb * u * slope_deg / (u ** 2 + zb ** 2) ** 2
        d2s = -exp_coeff * exp_term * (dphi ** 2 - d2phi) - 2.0 * sq_coeff
        wk = wts[:k_n][:, None] * share
        diag = (wk * (-d2s)).sum(axis=0)
        h = np.zeros((n_free + 1, n_free + 1))
        h[np.arange(n_free), np.arange(n_free)] = diag
        return h

    nv = n_free + 1
    grad_obj = np.zeros(nv)
    grad_obj[-1] = -1.0

    def objective(x):
        return -x[-1], grad_obj

    def objective_val(x):
        return -x[-1]

    def objective_hess(x):
        return np.zeros((nv, nv))

    def eta_for(zf):
        return float(-np.max(_rate_values(zf, 0.0)[0]))

    lb = np.concatenate([lb_z, [-np.inf]])
    ub = np.concatenate([ub_z, [np.inf]])
    eta0 = eta_for(zf_hat)
    x0 = np.concatenate([zf_hat, [eta0 - max(1e-3, 1e-3 * abs(eta0))]])

    # Strictly interior anchor: a tapered bump (zero at the pinned endpoints)
    # off the active box faces, tried in both directions.
    ramp = np.sin(np.pi * np.arange(1, n) / n)
    amp = 0.2 * min(cfg.step_z * n / math.pi, (cfg.h_max - cfg.h_min) / 2.0)
    lerp = z_hat[0] + np.arange(1, n) / n * (z_hat[n] - z_hat[0])
    candidates = []
    for base in (zf_hat, 0.5 * (zf_hat + lerp), lerp):
        for sign in (+1.0, -1.0):
            zc = np.clip(base + sign * amp * ramp, lb_z, ub_z)
            candidates.append(np.concatenate([zc, [eta_for(zc) - 1.0]]))

    prog = SmoothConvexProgram(
        x0=x0, objective=objective, objective_hess=objective_hess,
        constraints=constraints, constraint_hess=constraint_hess,
        constraints_val=constraints_val, objective_val=objective_val,
        lb=lb, ub=ub, meta={"block": "vertical"},
    )
    from .solvers.smooth import _strictly_feasible
    anchor = _first_strict(lambda c: _strictly_feasible(prog, c), candidates)
    if anchor is None:
        return traj, None
    prog.interior_anchor = anchor
    report = solve_smooth(prog, kkt_tol=kkt_tol)

    def to_traj(x):
        cand = Trajectory(traj.q.copy(),
                          np.concatenate([[z_hat[0]], x[:-1], [z_hat[n]]]))
        cand.validate(cfg)
        return cand

    def true_eta(t):
        return schedule_eta(schedule, rate_lb_matrix(t, sensors, params))

    p1 = to_traj(report.x)
    x2 = _mean_rate_polish(report.x, k_n, constraints, constraints_val,
                           constraint_hess, lb, ub, anchor, kkt_tol)
    e_old = true_eta(traj)
    e_p1 = true_eta(p1)
    if x2 is not None:
        p2 = to_traj(x2)
        if true_eta(p2) >= max(e_old, e_p1 - 1e-9):
            return p2, report
    if e_p1 >= e_old:
        return p1, report
    return traj, report


@dataclass(frozen=True)
class OfflineSolution:
    """Optimized path, binary schedule, achieved floor rate and the BCD trace."""

    trajectory: Trajectory
    schedule: np.ndarray
    eta: float
    trace: tuple[float, ...]
    eta_fractional: float

    @property
    def iterations(self) -> int:
        return len(self.trace)

    def to_json(self) -> str:
        pts = [[float(x), float(y), float(h)]
               for (x, y), h in zip(self.trajectory.q, self.trajectory.z)]
        return json.dumps({
            "waypoints": pts,
            "schedule": self.schedule.astype(int).tolist(),
            "eta": self.eta,
            "eta_fractional": self.eta_fractional,
            "trace": list(self.trace),
        }, indent=2)

    @staticmethod
    def from_json(text: str) -> "OfflineSolution":
        doc = json.loads(text)
        pts = np.asarray(doc["waypoints"], dtype=float)
        traj = Trajectory(pts[:, :2], pts[:, 2])
        return OfflineSolution(traj, np.asarray(doc["schedule"], dtype=float),
                               doc["eta"], tuple(doc["trace"]),
                               doc["eta_fractional"])


def bcd_optimize(cfg: MissionConfig, sensors: np.ndarray, params: ChannelParams,
                 *, optimize_altitude: bool = True, max_iter: int = 50,
                 kkt_tol: float = 1e-5) -> OfflineSolution:
    """Alternate scheduling, horizontal and vertical blocks until the floor
    rate improves by less than ``cfg.eps_bcd``; then quantize the schedule.

    Both trajectory minorants are global lower bounds tight at the expansion
    point, so no block can reduce the true objective; the explicit accept
    checks only guard against solver tolerance slop.
    """
    sensors = np.asarray(sensors, dtype=float)
    traj = init_trajectory(cfg)
    trace: list[float] = []
    eta_prev = -np.inf

    for _ in range(max_iter):
        schedule, _, _ = optimize_scheduling(traj, sensors, params)

        cand, _ = optimize_horizontal(schedule, traj, sensors, params, cfg, kkt_tol)
        if schedule_eta(schedule, rate_lb_matrix(cand, sensors, params)) \
                >= schedule_eta(schedule, rate_lb_matrix(traj, sensors, params)) - 1e-9:
            traj = cand

        if optimize_altitude:
            cand, _ = optimize_vertical(schedule, traj, sensors, params, cfg, kkt_tol)
            if schedule_eta(schedule, rate_lb_matrix(cand, sensors, params)) \
                    >= schedule_eta(schedule, rate_lb_matrix(traj, sensors, params)) - 1e-9:
                traj = cand

        eta_now = schedule_eta(schedule, rate_lb_matrix(traj, sensors, params))
        trace.append(eta_now)
        if len(trace) >= 2 and eta_now - eta_prev < cfg.eps_bcd:
            break
        eta_prev = eta_now

    schedule, eta_frac, _ = optimize_scheduling(traj, sensors, params)
    binary = reconstruct_binary_schedule(schedule)
    eta_bin = schedule_eta(binary, rate_lb_matrix(traj, sensors, params))
    return OfflineSolution(traj, binary, eta_bin, tuple(trace), eta_frac)
