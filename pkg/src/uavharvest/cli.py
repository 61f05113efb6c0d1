"""Command-line interface.

Subcommands cover the whole workflow: fitting the LoS channel model from city
sweeps, computing offline solutions, replaying single flights, running the
full Monte-Carlo evaluation, and reshaping results into per-figure series.
All outputs are deterministic for a fixed seed except the timing table.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import presets
from .channel import fit_logistic, params_from_fit
from .city import CityParams, generate_city, sample_los_probability
from .experiment import (ExperimentConfig, compute_offline_solutions,
                         read_results_csv, run_monte_carlo, summary_document,
                         write_results_csv, write_timing_csv)
from .offline import MissionConfig, OfflineSolution, bcd_optimize
from .online import Policy, run_episode

DEFAULT_OUT_ENV = "UAVHARVEST_OUT"


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(DEFAULT_OUT_ENV, ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args) -> ExperimentConfig:
    import dataclasses

    cfg = ExperimentConfig.from_json(Path(args.config).read_text()) \
        if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def cmd_fit_channel(args) -> int:
    out = _out_dir(args)
    city = CityParams() if not args.config else ExperimentConfig.from_json(
        Path(args.config).read_text()).city
    table = sample_los_probability(city, args.cities, args.seed or 7)
    table.to_csv(out / "los_samples.csv")
    fit = fit_logistic(table)
    (out / "channel_fit.json").write_text(fit.to_json())
    print(f"fit: R^2={fit.r_squared:.4f} bias={fit.logis_bias:.4f} "
          f"slope={fit.logis_slope:.4f} offset={fit.logis_offset:.4f}")
    print(f"wrote {out / 'los_samples.csv'} and {out / 'channel_fit.json'}")
    return 0


def cmd_offline(args) -> int:
    out = _out_dir(args)
    config = _load_config(args)
    sensors = config.sensors()
    params = config.params
    cfg = config.mission_for(args.duration)
    if args.scheme == "PLB":
        sol = bcd_optimize(cfg, sensors, params)
    elif args.scheme == "PLLA":
        from .experiment import baseline_plla
        sol = baseline_plla(cfg, sensors, params)
    else:
        from .experiment import baseline_lb
        sol = baseline_lb(cfg, sensors, params)
    name = f"offline_{args.scheme}_{args.duration:g}.json"
    (out / name).write_text(sol.to_json())
    (out / "sensors.json").write_text(json.dumps(
        {"sensors": sensors.tolist()}, indent=2))
    print(f"eta={sol.eta:.6f} (fractional {sol.eta_fractional:.6f}) "
          f"iterations={sol.iterations}")
    print(f"wrote {out / name}")
    return 0


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    config = _load_config(args)
    sensors = config.sensors()
    params = config.params
    sol = OfflineSolution.from_json(Path(args.solution).read_text())
    cfg = config.mission_for(args.duration)
    if sol.trajectory.n_slots != cfg.n_slots:
        print("error: solution slot count does not match --duration", file=sys.stderr)
        return 1
    city = generate_city(config.city, args.city_seed, keep_clear=sensors)
    ep = run_episode(sol, sensors, params, Policy(args.policy), city=city,
                     v_xy_max=cfg.v_xy_max, v_z_max=cfg.v_z_max,
                     t_total=cfg.t_total)
    name = f"trace_{args.policy}_{args.city_seed}.csv"
    with open(out / name, "w", newline="") as fh:
        ep.to_csv(fh)
    print(f"min_rate={ep.min_rate:.6f} per_sn="
          + ",".join(f"{v:.6f}" for v in ep.per_sn_rates))
    print(f"wrote {out / name}")
    return 0


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    config = _load_config(args)
    rows, aggregates, offline = run_monte_carlo(config, verbose=args.verbose)
    write_results_csv(rows, out / "results.csv")
    write_timing_csv(rows, out / "timing.csv")
    (out / "summary.json").write_text(
        json.dumps(summary_document(config, aggregates, offline), indent=2))
    for (fam, duration), sol in sorted(offline.items()):
        (out / f"offline_{fam}_{duration:g}.json").write_text(sol.to_json())
    print(f"wrote {out / 'results.csv'}, {out / 'summary.json'}, {out / 'timing.csv'}")
    return 0


def cmd_plot_data(args) -> int:
    out = _out_dir(args)
    results_dir = Path(args.results)
    summary = json.loads((results_dir / "summary.json").read_text())
    rows = read_results_csv(results_dir / "results.csv")

    # Convergence traces per duration (offline phase).
    with open(out / "fig4_convergence.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["duration", "iteration", "eta"])
        for key, doc in sorted(summary["offline"].items()):
            fam, duration = key.split("@")
            if fam != "PLB":
                continue
            for i, eta in enumerate(doc["trace"], start=1):
                writer.writerow([duration, i, repr(float(eta))])

    def agg_series(path, schemes):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["duration", "scheme", "mean_min_rate", "stderr", "n"])
            for scheme in schemes:
                doc = summary["aggregates"].get(scheme, {})
                for duration, stats in sorted(doc.items(), key=lambda kv: float(kv[0])):
                    writer.writerow([duration, scheme, repr(stats["mean"]),
                                     repr(stats["stderr"]), stats["n"]])

    agg_series(out / "fig5_offline_rates.csv", ["LB", "PLLA", "PLB"])
    agg_series(out / "fig7a_online_rates.csv", ["PLB", "ACS", "JA", "OJA"])

    with open(out / "fig6_trajectories.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["duration", "waypoint", "x", "y", "z"])
        for sol_file in sorted(results_dir.glob("offline_PLB_*.json")):
            duration = sol_file.stem.split("_")[-1]
            sol = OfflineSolution.from_json(sol_file.read_text())
            for i, ((x, y), z) in enumerate(zip(sol.trajectory.q, sol.trajectory.z)):
                writer.writerow([duration, i, repr(float(x)), repr(float(y)),
                                 repr(float(z))])

    timing_path = results_dir / "timing.csv"
    if timing_path.exists():
        acc: dict[tuple[str, int], list[float]] = {}
        with open(timing_path, newline="") as fh:
            for r in csv.DictReader(fh):
                if r["scheme"] in ("ACS", "JA"):
                    acc.setdefault((r["scheme"], int(r["segment"])), []).append(
                        float(r["seconds"]))
        with open(out / "fig8a_walltime.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scheme", "segment", "mean_seconds", "n"])
            for (scheme, seg), vals in sorted(acc.items()):
                writer.writerow([scheme, seg, repr(float(np.mean(vals))), len(vals)])

    k = len(rows[0].per_sn_rates) if rows else 0
    with open(out / "fig8b_rate_vs_k.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "scheme", "mean_min_rate", "stderr", "n"])
        for scheme, doc in sorted(summary["aggregates"].items()):
            vals = [r.min_rate for r in rows if r.scheme == scheme]
            if not vals:
                continue
            arr = np.asarray(vals)
            stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
            writer.writerow([k, scheme, repr(float(arr.mean())), repr(stderr),
                             arr.size])

    print(f"wrote figure series to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavharvest",
        description="UAV data-harvesting planner: offline 3D trajectory "
                    "optimization and online speed/schedule adaptation under "
                    "a probabilistic LoS channel.")
    parser.add_argument("--out", help="output directory (default: "
                        f"${DEFAULT_OUT_ENV} or current directory)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-channel", help="fit the logistic LoS model from a city sweep")
    p.add_argument("--cities", type=int, default=200)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--config", help="experiment config JSON (for city parameters)")
    p.set_defaults(func=cmd_fit_channel)

    p = sub.add_parser("offline", help="compute one offline solution")
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--scheme", choices=["PLB", "PLLA", "LB"], default="PLB")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, help="override master seed")
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser("simulate", help="replay one flight on one city realization")
    p.add_argument("--solution", required=True, help="offline solution JSON")
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--city-seed", type=int, required=True)
    p.add_argument("--policy", choices=[pol.value for pol in Policy], default="JA")
    p.add_argument("--config", help="experiment config JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="full Monte-Carlo evaluation")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed", type=int, help="override master seed")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot-data", help="reshape results into per-figure CSV series")
    p.add_argument("--results", required=True, help="directory written by evaluate")
    p.set_defaults(func=cmd_plot_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:                      # invariant violations -> nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
