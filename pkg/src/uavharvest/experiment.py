"""Experiment orchestration: baselines, Monte-Carlo evaluation, exports.

One configuration drives everything: offline solutions are computed once per
(duration, scheme family) because the pre-flight phase never sees a city
realization, then every seeded city is replayed under all requested schemes.
City realizations keep the sensor cells building-free, matching how the
LoS statistics were gathered (sensors on open ground). Result rows carry no
timing so repeated runs are byte-identical; wall-clock measurements go to a
separate timing table.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace, asdict

import numpy as np

from . import presets
from .channel import ChannelParams, expected_rate_lb
from .city import CityParams, CityRealization, generate_city
from .offline import MissionConfig, OfflineSolution, bcd_optimize
from .online import EpisodeResult, FlightPath, Policy, build_path, run_episode, sample_channel_states
from .solvers import LinearProgram, solve_lp

OFFLINE_SCHEMES = ("PLB", "PLLA", "LB")
ONLINE_SCHEMES = ("PLB", "ACS", "JA", "OJA")
ALL_SCHEMES = ("LB", "PLLA", "PLB", "ACS", "JA", "OJA", "STATIC")


class ExperimentError(ValueError):
    """Raised for inconsistent experiment configurations."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one evaluation run needs, JSON round-trippable."""

    k: int = presets.DEFAULT_K
    sensor_seed: int = presets.SENSOR_LAYOUT_SEED
    n_realizations: int = 100
    seed: int = 2024
    durations: tuple[float, ...] = presets.DURATION_SWEEP
    schemes: tuple[str, ...] = ALL_SCHEMES
    city: CityParams = field(default_factory=presets.urban_city)
    channel: ChannelParams | None = None          # None -> urban preset
    mission: dict = field(default_factory=lambda: dict(presets.MISSION_DEFAULTS))
    channel_mode: str = "city"                    # "city" | "iid"

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ExperimentError("n_realizations must be at least 1")
        unknown = set(self.schemes) - set(ALL_SCHEMES)
        if unknown:
            raise ExperimentError(f"unknown schemes: {sorted(unknown)}")
        if self.channel_mode not in ("city", "iid"):
            raise ExperimentError("channel_mode must be 'city' or 'iid'")

    @property
    def params(self) -> ChannelParams:
        base = self.channel if self.channel is not None else presets.urban_channel()
        return base.with_tx_count(self.k)

    def sensors(self) -> np.ndarray:
        rng = np.random.default_rng(self.sensor_seed)
        return rng.uniform(0.0, self.city.area_side, size=(self.k, 2))

    def mission_for(self, duration: float) -> MissionConfig:
        return MissionConfig.build(duration, **self.mission)

    def to_json(self) -> str:
        doc = {
            "k": self.k, "sensor_seed": self.sensor_seed,
            "n_realizations": self.n_realizations, "seed": self.seed,
            "durations": list(self.durations), "schemes": list(self.schemes),
            "city": asdict(self.city),
            "channel": None if self.channel is None else json.loads(self.channel.to_json()),
            "mission": {k: (list(v) if isinstance(v, (tuple, list)) else v)
                        for k, v in self.mission.items()},
            "channel_mode": self.channel_mode,
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        channel = doc.get("channel")
        if channel is not None:
            channel["tx_power"] = tuple(channel["tx_power"])
            channel = ChannelParams(**channel)
        mission = dict(presets.MISSION_DEFAULTS)
        mission.update(doc.get("mission", {}))
        mission["q_start"] = tuple(mission["q_start"])
        mission["q_end"] = tuple(mission["q_end"])
        return ExperimentConfig(
            k=doc.get("k", presets.DEFAULT_K),
            sensor_seed=doc.get("sensor_seed", presets.SENSOR_LAYOUT_SEED),
            n_realizations=doc.get("n_realizations", 100),
            seed=doc.get("seed", 2024),
            durations=tuple(doc.get("durations", presets.DURATION_SWEEP)),
            schemes=tuple(doc.get("schemes", ALL_SCHEMES)),
            city=CityParams(**doc["city"]) if "city" in doc else presets.urban_city(),
            channel=channel,
            mission=mission,
            channel_mode=doc.get("channel_mode", "city"),
        )


@dataclass
class ResultRow:
    """One (scheme, duration, realization) outcome."""

    scheme: str
    duration: float
    realization_seed: int
    min_rate: float
    per_sn_rates: tuple[float, ...]
    offline_iterations: int
    wall_times: tuple[float, ...] = ()

    def __post_init__(self):
        if abs(self.min_rate - min(self.per_sn_rates)) > 1e-12:
            raise ExperimentError("min_rate must equal the smallest per-sensor rate")


def baseline_lb(cfg: MissionConfig, sensors: np.ndarray,
                params: ChannelParams, **kw) -> OfflineSolution:
    """Trajectory/scheduling designed as if every link were in LoS."""
    return bcd_optimize(cfg, sensors, params.with_certain_los(), **kw)


def baseline_plla(cfg: MissionConfig, sensors: np.ndarray,
                  params: ChannelParams, **kw) -> OfflineSolution:
    """Horizontal-only design pinned to the minimum altitude."""
    cfg_low = replace(cfg, z_start=cfg.h_min, z_end=cfg.h_min)
    return bcd_optimize(cfg_low, sensors, params, optimize_altitude=False, **kw)


def static_hover_point(cfg: MissionConfig, sensors: np.ndarray,
                       params: ChannelParams) -> tuple[np.ndarray, float]:
    """Static-UAV placement: sensor centroid, altitude by 1 m grid sweep of
    the worst-sensor LoS-only expected rate."""
    sensors = np.asarray(sensors, dtype=float)
    center = sensors.mean(axis=0)
    gammas = np.asarray(params.link_snr)
    alts = np.arange(cfg.h_min, cfg.h_max + 0.5, 1.0)
    worst = np.full(alts.size, np.inf)
    for k, w in enumerate(sensors):
        worst = np.minimum(worst, expected_rate_lb(center, alts, w, gammas[k], params))
    return center, float(alts[int(np.argmax(worst))])


def baseline_static(cfg: MissionConfig, sensors: np.ndarray, params: ChannelParams,
                    city: CityRealization) -> np.ndarray:
    """Hover at the static placement for the whole flight; schedule by LP
    against the realized channel states at that point. Returns per-sensor
    achieved average rates."""
    sensors = np.asarray(sensors, dtype=float)
    center, alt = static_hover_point(cfg, sensors, params)
    point = np.array([center[0], center[1], alt])
    states = sample_channel_states(city, point, sensors)
    gammas = np.asarray(params.link_snr)
    dist = np.sqrt(np.sum((sensors - center) ** 2, axis=1) + alt ** 2)
    r_los = np.log2(1.0 + gammas * dist ** (-params.pathloss_los))
    r_nlos = np.log2(1.0 + params.nlos_atten * gammas * dist ** (-params.pathloss_nlos))
    rates = states * r_los + (1 - states) * r_nlos

    k_n = sensors.shape[0]
    t0 = cfg.t_total
    nv = k_n + 1
    c = np.zeros(nv)
    c[-1] = 1.0
    a_ub = np.zeros((k_n + 1, nv))
    b_ub = np.zeros(k_n + 1)
    for k in range(k_n):
        a_ub[k, k] = -rates[k] / t0
        a_ub[k, -1] = 1.0
    a_ub[-1, :k_n] = 1.0
    b_ub[-1] = t0
    rep = solve_lp(LinearProgram(c, a_ub, b_ub, lb=np.zeros(nv),
                                 ub=np.full(nv, np.inf), maximize=True))
    if rep.status != "optimal":
        raise ExperimentError(f"static scheduling LP ended with {rep.status}")
    tau = rep.x[:k_n]
    return tau * rates / t0


def _execute_offline_literally(sol: OfflineSolution, sensors, params, cfg,
                               city=None, states=None, iid_seed=None) -> EpisodeResult:
    """Run an offline solution with no adaptation (the PLB executor)."""
    return run_episode(sol, sensors, params, Policy.PLB, city=city, states=states,
                       iid_seed=iid_seed, v_xy_max=cfg.v_xy_max, v_z_max=cfg.v_z_max,
                       t_total=cfg.t_total)


def compute_offline_solutions(config: ExperimentConfig,
                              verbose: bool = False) -> dict[tuple[str, float], OfflineSolution]:
    """Offline solves shared by all realizations: one per (family, duration)."""
    sensors = config.sensors()
    params = config.params
    families = [s for s in OFFLINE_SCHEMES
                if s == "PLB" or s in config.schemes]
    out = {}
    for duration in config.durations:
        cfg = config.mission_for(duration)
        for fam in families:
            if fam == "PLB":
                sol = bcd_optimize(cfg, sensors, params)
            elif fam == "PLLA":
                sol = baseline_plla(cfg, sensors, params)
            else:
                sol = baseline_lb(cfg, sensors, params)
            out[(fam, duration)] = sol
            if verbose:
                print(f"offline {fam} T0={duration}: eta={sol.eta:.4f} "
                      f"iters={sol.iterations}")
    return out


def run_monte_carlo(config: ExperimentConfig, verbose: bool = False,
                    offline: dict[tuple[str, float], OfflineSolution] | None = None):
    """Full sweep: returns (rows, aggregates, offline solutions).

    Rows are sorted by (scheme, duration, realization seed) so assembly order
    never leaks into the output. City seeds are shared across schemes and
    durations, pairing the comparisons. Precomputed offline solutions may be
    passed in; they are recomputed otherwise.
    """
    sensors = config.sensors()
    params = config.params
    if offline is None:
        offline = compute_offline_solutions(config, verbose=verbose)

    seeds = [int(s.generate_state(1)[0]) % (2 ** 31)
             for s in np.random.SeedSequence(config.seed).spawn(config.n_realizations)]

    rows: list[ResultRow] = []
    for duration in config.durations:
        cfg = config.mission_for(duration)
        paths: dict[str, FlightPath] = {}
        for fam in OFFLINE_SCHEMES:
            if (fam, duration) in offline:
                paths[fam] = build_path(offline[(fam, duration)], sensors, params,
                                        cfg.v_xy_max, cfg.v_z_max, cfg.t_total)
        for seed in seeds:
            city = None
            if config.channel_mode == "city":
                city = generate_city(config.city, seed, keep_clear=sensors)

            def episode(fam, policy):
                sol = offline[(fam, duration)]
                return run_episode(sol, sensors, params, policy, city=city,
                                   iid_seed=None if city is not None else seed,
                                   v_xy_max=cfg.v_xy_max, v_z_max=cfg.v_z_max,
                                   t_total=cfg.t_total, path=paths[fam])

            for scheme in config.schemes:
                if scheme == "STATIC":
                    if city is None:
                        continue            # static baseline needs ray tracing
                    rates = baseline_static(cfg, sensors, params, city)
                    rows.append(ResultRow("STATIC", duration, seed,
                                          float(rates.min()),
                                          tuple(float(v) for v in rates), 0))
                    continue
                fam = scheme if scheme in ("PLLA", "LB") else "PLB"
                policy = Policy.PLB if scheme in ("PLLA", "LB") else Policy(scheme)
                ep = episode(fam, policy)
                rows.append(ResultRow(
                    scheme, duration, seed, ep.min_rate,
                    tuple(float(v) for v in ep.per_sn_rates),
                    offline[(fam, duration)].iterations,
                    tuple(float(v) for v in ep.wall_times)))
        if verbose:
            print(f"duration {duration}: {len(seeds)} realizations done")

    rows.sort(key=lambda r: (r.scheme, r.duration, r.realization_seed))
    aggregates = aggregate_rows(rows)
    return rows, aggregates, offline


def aggregate_rows(rows: list[ResultRow]) -> dict:
    """Mean and standard error of the min-rate per (scheme, duration)."""
    groups: dict[tuple[str, float], list[float]] = {}
    for r in rows:
        groups.setdefault((r.scheme, r.duration), []).append(r.min_rate)
    out = {}
    for (scheme, duration), vals in sorted(groups.items()):
        arr = np.asarray(vals)
        stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        out.setdefault(scheme, {})[repr(duration)] = {
            "mean": float(arr.mean()), "stderr": stderr, "n": int(arr.size),
        }
    return out


def write_results_csv(rows: list[ResultRow], path) -> None:
    if not rows:
        raise ExperimentError("no rows to write")
    k = len(rows[0].per_sn_rates)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scheme", "duration", "realization_seed", "min_rate"]
                        + [f"rate_{i + 1}" for i in range(k)]
                        + ["offline_iterations"])
        for r in rows:
            writer.writerow([r.scheme, repr(float(r.duration)), r.realization_seed,
                             repr(float(r.min_rate))]
                            + [repr(float(v)) for v in r.per_sn_rates]
                            + [r.offline_iterations])


def write_timing_csv(rows: list[ResultRow], path) -> None:
    """Per-waypoint wall times; non-reproducible by nature, hence separate."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scheme", "duration", "realization_seed", "segment", "seconds"])
        for r in rows:
            for i, w in enumerate(r.wall_times):
                writer.writerow([r.scheme, repr(float(r.duration)),
                                 r.realization_seed, i + 1, repr(float(w))])


def read_results_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        raw = list(csv.DictReader(fh))
    rows = []
    for r in raw:
        rates = tuple(float(v) for k, v in r.items() if k.startswith("rate_"))
        rows.append(ResultRow(r["scheme"], float(r["duration"]),
                              int(r["realization_seed"]), float(r["min_rate"]),
                              rates, int(r["offline_iterations"])))
    return rows


def summary_document(config: ExperimentConfig, aggregates: dict,
                     offline: dict[tuple[str, float], OfflineSolution]) -> dict:
    return {
        "config": json.loads(config.to_json()),
        "aggregates": aggregates,
        "offline": {
            f"{fam}@{duration!r}": {
                "eta": sol.eta,
                "eta_fractional": sol.eta_fractional,
                "iterations": sol.iterations,
                "trace": list(sol.trace),
            }
            for (fam, duration), sol in sorted(offline.items())
        },
    }
