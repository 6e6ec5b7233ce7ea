"""Command-line front end: region sweeps, single runs, load sweeps, drains."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace

import numpy as np

from .channel import derive_seed
from .drain import DrainProblem, idle_state_prediction
from .harness import (
    load_config,
    load_sweep,
    read_points_csv,
    region_bank,
    region_table_bps,
    run,
    write_delays_csv,
    write_region_csv,
    write_summary,
    write_trace,
)
from .schedulers import POLICY_KINDS


def _add_config(parser):
    parser.add_argument("--config", required=True, help="JSON simulation config")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bcsched",
        description="Downlink OFDM broadcast-channel scheduling lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cap = sub.add_parser("capacity", help="sweep the sampled ergodic region")
    _add_config(p_cap)
    p_cap.add_argument("--angles", type=int, default=64)
    p_cap.add_argument("--out", required=True)

    p_sim = sub.add_parser("simulate", help="run one policy simulation")
    _add_config(p_sim)
    p_sim.add_argument("--policy", choices=POLICY_KINDS)
    p_sim.add_argument("--slots", type=int)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--out", help="trace CSV path")
    p_sim.add_argument("--summary", help="summary JSON path")

    p_sweep = sub.add_parser("sweep", help="delay-versus-load sweep")
    _add_config(p_sweep)
    p_sweep.add_argument("--policies", default="delay-opt,lqhpr,qps")
    p_sweep.add_argument("--points", required=True, help="CSV with rho1_bps,rho2_bps")
    p_sweep.add_argument("--seeds", type=int, default=5)
    p_sweep.add_argument("--out", required=True)

    p_drain = sub.add_parser("drain", help="solve a static drain problem")
    _add_config(p_drain)
    p_drain.add_argument("--queues", required=True, help="JSON with initial queues")
    p_drain.add_argument("--out", required=True, help="drain trajectory CSV")
    return parser


def cmd_capacity(args):
    config = load_config(args.config)
    table = region_table_bps(config, args.angles)
    write_region_csv(table, args.out)
    print(f"wrote {table.shape[0]} boundary points to {args.out}")
    return 0


def cmd_simulate(args):
    config = load_config(args.config)
    overrides = {}
    if args.policy is not None:
        overrides["policy"] = args.policy
    if args.slots is not None:
        overrides["num_slots"] = args.slots
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        config = replace(config, **overrides)
    records, summary = run(config)
    trace_path = args.out or config.output_trace
    summary_path = args.summary or config.output_summary
    if trace_path:
        write_trace(records, trace_path)
    if summary_path:
        write_summary(summary, summary_path)
    print(
        f"policy={config.policy} slots={config.num_slots} "
        f"mean_delay_ms={summary.mean_delay_ms:.6g} "
        f"stability={summary.stability.verdict}"
    )
    return 0


def cmd_sweep(args):
    config = load_config(args.config)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    points = read_points_csv(args.points)
    rows = load_sweep(config, points, policies, args.seeds)
    write_delays_csv(rows, args.out)
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


def cmd_drain(args):
    config = load_config(args.config)
    with open(args.queues) as fh:
        spec = json.load(fh)
    unknown = set(spec) - {"initial_queues_bits", "avg_arrival_bits_per_slot"}
    if unknown:
        raise ValueError(f"unknown drain keys: {sorted(unknown)}")
    q1 = np.asarray(spec["initial_queues_bits"], dtype=float)
    abar = spec.get("avg_arrival_bits_per_slot")
    if abar is None:
        abar = np.maximum(config.mean_arrival_bits_per_slot(), 1e-6)
    else:
        abar = np.asarray(abar, dtype=float)
    bank = region_bank(config)
    problem = DrainProblem(
        initial_queues=q1,
        avg_arrival_rates=abar,
        region=bank,
        power_budget=config.power_budget,
        rate_scale=config.slot.bits_per_nat_symbol,
    )
    solution = idle_state_prediction(problem)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "user", "q_bits", "rate_bits", "weight"])
        traj = solution.trajectory
        for n in range(traj.rates.shape[0]):
            for m in range(q1.shape[0]):
                writer.writerow(
                    [
                        n + 1,
                        m,
                        f"{traj.queues[n, m]:.12g}",
                        f"{traj.rates[n, m]:.12g}",
                        f"{traj.weights[n, m]:.12g}",
                    ]
                )
    eta = ", ".join(f"{x:.4f}" for x in solution.eta)
    print(f"idle onsets (slots): [{eta}]  total_delay={solution.total_delay:.6g}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "capacity": cmd_capacity,
        "simulate": cmd_simulate,
        "sweep": cmd_sweep,
        "drain": cmd_drain,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
