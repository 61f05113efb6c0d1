"""In-flight adaptation along the fixed offline path.

The offline waypoints are frozen; what remains adjustable in real time are
the per-segment traversal times (equivalently the flying speeds) and the
transmission time shares. At each waypoint the UAV observes which sensors
currently have line of sight, then re-solves a small LP over the remaining
segments mixing realized rates (current segment) with model expectations
(future segments). Four policies are supported:

* ``PLB``  - execute the offline schedule at uniform speed, no re-solving;
* ``ACS``  - re-solve transmission shares only, traversal times stay at the
  offline slot length;
* ``JA``   - jointly re-solve shares and traversal times;
* ``OJA``  - one upfront LP with the full realized rate matrix substituted
  for expectations everywhere (non-causal; an upper bound for JA).

Channel states are ray-traced against one fixed city realization, so they are
spatially consistent along the path; an i.i.d. sampling mode driven by the
logistic model is available for ablations.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channel import ChannelParams, expected_rate, los_probability, rate_conditional, elevation_angle
from .city import CityRealization, los_visible_batch
from .offline import OfflineSolution
from .solvers import LinearProgram, solve_lp

_TIME_TOL = 1e-7


class OnlineError(RuntimeError):
    """Raised when an episode reaches a state its invariants forbid."""


class Policy(str, Enum):
    PLB = "PLB"
    ACS = "ACS"
    JA = "JA"
    OJA = "OJA"

    @property
    def causal(self) -> bool:
        return self is not Policy.OJA


@dataclass(frozen=True)
class PathSegment:
    """One line segment of the offline path with its per-sensor rate data."""

    index: int
    h_len: float
    v_len: float
    t_min: float
    expected_rates: tuple[float, ...]


@dataclass(frozen=True)
class FlightPath:
    """Offline path unpacked into per-segment geometry and rate tables.

    Rates for segment n are evaluated at its starting waypoint and held
    constant over the segment. ``t_min`` is the smallest traversal time the
    speed caps allow.
    """

    waypoints: np.ndarray          # (N+1, 3)
    slot_len: float
    t_total: float
    offline_schedule: np.ndarray   # (K, N) binary
    h_len: np.ndarray              # (N,)
    v_len: np.ndarray
    t_min: np.ndarray
    exp_rates: np.ndarray          # (K, N)
    los_rates: np.ndarray          # (K, N)
    nlos_rates: np.ndarray         # (K, N)

    @property
    def n_segments(self) -> int:
        return self.h_len.size

    @property
    def n_sensors(self) -> int:
        return self.exp_rates.shape[0]

    @property
    def segments(self) -> list[PathSegment]:
        return [PathSegment(n, float(self.h_len[n]), float(self.v_len[n]),
                            float(self.t_min[n]), tuple(self.exp_rates[:, n]))
                for n in range(self.n_segments)]

    def realized_rates(self, states: np.ndarray) -> np.ndarray:
        """Conditional rates selected by binary channel states."""
        states = np.asarray(states, dtype=float)
        return states * self.los_rates + (1.0 - states) * self.nlos_rates


def build_path(sol: OfflineSolution, sensors: np.ndarray, params: ChannelParams,
               v_xy_max: float, v_z_max: float, t_total: float) -> FlightPath:
    """Discretize the offline solution into segments with rate tables."""
    sensors = np.asarray(sensors, dtype=float)
    q = sol.trajectory.q
    z = sol.trajectory.z
    n = sol.trajectory.n_slots
    h_len = np.linalg.norm(np.diff(q, axis=0), axis=1)
    v_len = np.abs(np.diff(z))
    t_min = np.maximum(h_len / v_xy_max, v_len / v_z_max)

    gammas = np.asarray(params.link_snr)
    k_n = sensors.shape[0]
    exp_rates = np.empty((k_n, n))
    los_rates = np.empty((k_n, n))
    nlos_rates = np.empty((k_n, n))
    qs, zs = q[:-1], z[:-1]
    for k, w in enumerate(sensors):
        dist = np.sqrt(np.sum((qs - w) ** 2, axis=1) + zs ** 2)
        exp_rates[k] = expected_rate(qs, zs, w, gammas[k], params)
        los_rates[k] = rate_conditional(dist, True, gammas[k], params)
        nlos_rates[k] = rate_conditional(dist, False, gammas[k], params)

    waypoints = np.concatenate([q, z[:, None]], axis=1)
    return FlightPath(waypoints, t_total / n, t_total, sol.schedule.copy(),
                      h_len, v_len, t_min, exp_rates, los_rates, nlos_rates)


def sample_channel_states(city: CityRealization, waypoint, sensors) -> np.ndarray:
    """Ray-traced LoS indicator for every sensor from one waypoint."""
    sensors = np.asarray(sensors, dtype=float)
    k_n = sensors.shape[0]
    uavs = np.broadcast_to(np.asarray(waypoint, dtype=float), (k_n, 3))
    sns3 = np.concatenate([sensors, np.zeros((k_n, 1))], axis=1)
    return los_visible_batch(city, uavs, sns3).astype(np.int8)


def sample_state_matrix(city: CityRealization, path: FlightPath,
                        sensors) -> np.ndarray:
    """Ray-traced LoS indicators for all (sensor, segment) pairs."""
    sensors = np.asarray(sensors, dtype=float)
    k_n = sensors.shape[0]
    n = path.n_segments
    starts = path.waypoints[:-1]
    uavs = np.repeat(starts, k_n, axis=0)
    sns3 = np.tile(np.concatenate([sensors, np.zeros((k_n, 1))], axis=1), (n, 1))
    vis = los_visible_batch(city, uavs, sns3).reshape(n, k_n).T
    return vis.astype(np.int8)


def iid_state_matrix(path: FlightPath, sensors, params: ChannelParams,
                     seed: int) -> np.ndarray:
    """Model-consistent i.i.d. channel states (ablation mode)."""
    sensors = np.asarray(sensors, dtype=float)
    rng = np.random.default_rng(seed)
    starts = path.waypoints[:-1]
    probs = np.empty((sensors.shape[0], path.n_segments))
    for k, w in enumerate(sensors):
        theta = elevation_angle(starts[:, :2], starts[:, 2], w)
        probs[k] = los_probability(theta, params, clamp=True)
    return (rng.random(probs.shape) < probs).astype(np.int8)


@dataclass
class OnlineState:
    """Causal episode state at the start of segment ``index``."""

    index: int
    t_remaining: float
    collected: np.ndarray          # (K,) accumulated data, bits/Hz * s

    def check(self, path: FlightPath) -> None:
        need = float(path.t_min[self.index:].sum())
        if self.t_remaining < need - _TIME_TOL:
            raise OnlineError(
                f"remaining time {self.t_remaining:.6f}s cannot cover minimum "
                f"traversal {need:.6f}s from segment {self.index}")


def solve_online_step(state: OnlineState, path: FlightPath, policy: Policy,
                      realized_now: np.ndarray,
                      realized_all: np.ndarray | None = None,
                      feas_tol: float = 1e-7):
    """Per-waypoint allocation over the remaining segments.

    Returns ``(tau, t, eta, report)`` where ``tau`` is (K, M) transmission
    time and ``t`` (M,) traversal times for segments ``state.index`` onward.
    ``realized_now`` are this segment's realized per-sensor rates; future
    segments use expectations, except for ``OJA`` which requires the full
    realized matrix upfront.
    """
    state.check(path)
    n0 = state.index
    m = path.n_segments - n0
    k_n = path.n_sensors
    t0 = path.t_total

    if policy is Policy.PLB:
        tau = path.offline_schedule[:, n0:] * path.slot_len
        t = np.full(m, path.slot_len)
        eta = float(np.min(state.collected + tau[:, 0] * realized_now) / t0)
        return tau, t, eta, None

    rates = np.empty((k_n, m))
    if policy is Policy.OJA:
        if realized_all is None:
            raise OnlineError("OJA needs the full channel-state rate matrix upfront")
        rates[:] = realized_all[:, n0:]
    else:
        rates[:, 0] = realized_now
        if m > 1:
            rates[:, 1:] = path.exp_rates[:, n0 + 1:]

    nv = k_n * m + m + 1
    c = np.zeros(nv)
    c[-1] = 1.0
    rows = k_n + m + 1
    a_ub = np.zeros((rows, nv))
    b_ub = np.zeros(rows)
    for k in range(k_n):
        a_ub[k, k * m:(k + 1) * m] = -rates[k] / t0
        a_ub[k, -1] = 1.0
        b_ub[k] = state.collected[k] / t0
    for j in range(m):
        a_ub[k_n + j, j::m][:k_n] = 1.0
        a_ub[k_n + j, k_n * m + j] = -1.0
    a_ub[-1, k_n * m:k_n * m + m] = 1.0
    b_ub[-1] = state.t_remaining

    lb = np.zeros(nv)
    ub = np.full(nv, np.inf)
    if policy is Policy.ACS:
        lb[k_n * m:k_n * m + m] = path.slot_len
        ub[k_n * m:k_n * m + m] = path.slot_len
    else:
        lb[k_n * m:k_n * m + m] = path.t_min[n0:]

    report = solve_lp(LinearProgram(c, a_ub, b_ub, lb=lb, ub=ub, maximize=True),
                      feas_tol=feas_tol)
    if report.status != "optimal":
        raise OnlineError(f"online LP ended with status {report.status}")
    tau = report.x[:k_n * m].reshape(k_n, m)
    t = report.x[k_n * m:k_n * m + m]
    return tau, t, float(report.x[-1]), report


@dataclass
class EpisodeResult:
    """Full record of one simulated flight."""

    policy: Policy
    per_sn_rates: np.ndarray       # (K,) achieved average rates, bps/Hz
    min_rate: float
    tau: np.ndarray                # (K, N) committed transmission times
    t: np.ndarray                  # (N,) committed traversal times
    states: np.ndarray             # (K, N) observed channel states
    eta_trace: np.ndarray          # (N,) LP value at each waypoint
    wall_times: np.ndarray         # (N,) per-waypoint solve seconds
    cumulative: np.ndarray = field(repr=False, default=None)  # (K, N)

    def to_csv(self, fh) -> None:
        k_n, n = self.tau.shape
        writer = csv.writer(fh)
        header = ["segment", "t"]
        header += [f"tau_{k + 1}" for k in range(k_n)]
        header += [f"c_{k + 1}" for k in range(k_n)]
        header += [f"cum_rate_{k + 1}" for k in range(k_n)]
        header += ["eta"]
        writer.writerow(header)
        for i in range(n):
            row = [i + 1, repr(float(self.t[i]))]
            row += [repr(float(v)) for v in self.tau[:, i]]
            row += [int(v) for v in self.states[:, i]]
            row += [repr(float(v)) for v in self.cumulative[:, i]]
            row.append(repr(float(self.eta_trace[i])))
            writer.writerow(row)


def run_episode(sol: OfflineSolution, sensors: np.ndarray, params: ChannelParams,
                policy: Policy, *, city: CityRealization | None = None,
                states: np.ndarray | None = None, iid_seed: int | None = None,
                v_xy_max: float, v_z_max: float, t_total: float,
                path: FlightPath | None = None) -> EpisodeResult:
    """Walk the path segment by segment under one policy.

    Channel states come from an explicit matrix, a ray-traced city, or the
    i.i.d. model mode, in that order of precedence. Committed traversal times
    exhaust the flight budget exactly (the final segment absorbs leftover
    time, which never reduces any rate).
    """
    policy = Policy(policy)
    if path is None:
        path = build_path(sol, sensors, params, v_xy_max, v_z_max, t_total)
    n = path.n_segments
    k_n = path.n_sensors

    if states is None:
        if city is not None:
            states = sample_state_matrix(city, path, sensors)
        elif iid_seed is not None:
            states = iid_state_matrix(path, sensors, params, iid_seed)
        else:
            raise OnlineError("need one of: states, city, iid_seed")
    states = np.asarray(states)
    if states.shape != (k_n, n):
        raise OnlineError("state matrix shape mismatch")
    realized = states * path.los_rates + (1 - states) * path.nlos_rates

    state = OnlineState(0, path.t_total, np.zeros(k_n))
    tau_out = np.zeros((k_n, n))
    t_out = np.zeros(n)
    eta_trace = np.zeros(n)
    wall = np.zeros(n)
    cumulative = np.zeros((k_n, n))
    plan = None                     # OJA's upfront solution

    for seg in range(n):
        state.index = seg
        r_now = realized[:, seg]
        tic = time.perf_counter()
        if policy is Policy.OJA:
            if plan is None:
                tau_all, t_all, eta, _ = solve_online_step(
                    state, path, policy, r_now, realized_all=realized)
                plan = (tau_all, t_all, eta)
            tau_seg = plan[0][:, seg]
            t_seg = float(plan[1][seg])
            eta = plan[2]
        else:
            tau_plan, t_plan, eta, _ = solve_online_step(state, path, policy, r_now)
            tau_seg = tau_plan[:, 0]
            t_seg = float(t_plan[0])
        wall[seg] = time.perf_counter() - tic

        if seg == n - 1:
            t_seg = state.t_remaining        # absorb leftover budget
        if t_seg < path.t_min[seg] - _TIME_TOL:
            raise OnlineError("committed traversal time violates the speed cap")

        tau_out[:, seg] = tau_seg
        t_out[seg] = t_seg
        eta_trace[seg] = eta
        state.collected = state.collected + tau_seg * r_now
        state.t_remaining -= t_seg
        cumulative[:, seg] = state.collected / path.t_total

    if abs(t_out.sum() - path.t_total) > _TIME_TOL:
        raise OnlineError("traversal times do not exhaust the flight budget")

    per_sn = state.collected / path.t_total
    return EpisodeResult(policy, per_sn, float(per_sn.min()), tau_out, t_out,
                         np.asarray(states), eta_trace, wall, cumulative)
