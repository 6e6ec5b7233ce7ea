"""End-to-end experiment harness: single runs, region sweeps, load sweeps.

Owns all unit conversion (solver rates are nats per channel use; queues are
bits), the seed bookkeeping (one master seed, labeled sub-seeds for channel,
arrivals and banks) and all file output.  One run is one sequential loop;
sweeps are independent runs merged in deterministic order.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .capacity import sweep_region
from .channel import ChannelConfig, SlotConfig, build_bank, derive_rng, derive_seed, draw_block
from .queueing import (
    ArrivalProcess,
    MacState,
    delay_metrics,
    draw_arrivals,
    step_queues,
    update_avg_arrivals,
)
from .schedulers import POLICY_KINDS, make_policy

SCHEMA_VERSION = 1
TRACE_HEADER = ["slot", "user", "q_bits", "rate_bits", "arrival_bits", "weight"]
DELAYS_HEADER = ["rho1_bps", "rho2_bps", "policy", "mean_delay_ms", "stderr_ms", "stable"]
MIN_PROBE_SLOTS = 10_000


@dataclass
class SimConfig:
    channel: ChannelConfig
    arrivals: tuple
    policy: str = "max-sum"
    policy_params: dict = field(default_factory=dict)
    num_slots: int = 20_000
    warmup_slots: int = 2_000
    seed: int = 0
    bank_size_region: int = 500
    bank_size_scheduler: int = 100
    arrival_window_slots: int = 1_000
    max_fallback_fraction: float = 0.01
    output_trace: str = None
    output_summary: str = None

    def __post_init__(self):
        self.arrivals = tuple(self.arrivals)
        if len(self.arrivals) != self.channel.num_users:
            raise ValueError("need one arrival process per user")
        if not (self.num_slots > self.warmup_slots >= 0):
            raise ValueError("need num_slots > warmup_slots >= 0")
        if self.policy not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.policy!r}")

    @property
    def slot(self) -> SlotConfig:
        return SlotConfig(
            slot_duration_s=self.channel.block_duration_s,
            bandwidth_hz=self.channel.bandwidth_hz,
            num_subcarriers=self.channel.num_subcarriers,
        )

    @property
    def power_budget(self) -> float:
        return self.channel.power_budget()

    def mean_arrival_bits_per_slot(self) -> np.ndarray:
        t_slot = self.channel.block_duration_s
        return np.array([p.mean_bit_rate * t_slot for p in self.arrivals])


_CHANNEL_KEYS = {
    "num_users",
    "num_subcarriers",
    "bandwidth_hz",
    "block_duration_s",
    "num_taps",
    "power_delay_profile",
    "snr_db",
    "seed",
}
_ARRIVAL_KEYS = {"packet_rate", "packet_size_bits"}
_TOP_KEYS = {
    "channel",
    "arrivals",
    "policy",
    "policy_params",
    "num_slots",
    "warmup_slots",
    "seed",
    "bank_size_region",
    "bank_size_scheduler",
    "arrival_window_slots",
    "max_fallback_fraction",
    "output_trace",
    "output_summary",
}


def _check_keys(d, allowed, where):
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown {where} config keys: {sorted(unknown)}")


def simconfig_from_dict(raw: dict) -> SimConfig:
    """Strict JSON-dict parser: unknown keys are rejected at every level."""
    _check_keys(raw, _TOP_KEYS, "top-level")
    channel_raw = dict(raw.get("channel", {}))
    _check_keys(channel_raw, _CHANNEL_KEYS, "channel")
    if "power_delay_profile" in channel_raw and channel_raw["power_delay_profile"] is not None:
        channel_raw["power_delay_profile"] = tuple(channel_raw["power_delay_profile"])
    channel = ChannelConfig(**channel_raw)
    arrivals = []
    for entry in raw.get("arrivals", []):
        _check_keys(entry, _ARRIVAL_KEYS, "arrival")
        arrivals.append(ArrivalProcess(**entry))
    rest = {k: v for k, v in raw.items() if k not in ("channel", "arrivals")}
    return SimConfig(channel=channel, arrivals=tuple(arrivals), **rest)


def load_config(path) -> SimConfig:
    with open(path) as fh:
        return simconfig_from_dict(json.load(fh))


class SlotRecord(NamedTuple):
    slot: int
    queues_bits: np.ndarray
    rates_bits: np.ndarray
    arrivals_bits: np.ndarray
    weights: np.ndarray


@dataclass
class RunRecords:
    """Columnar per-slot records; row n is the state after slot n+1."""

    queues: np.ndarray  # (N, M) backlog after the slot's drain+refill
    rates: np.ndarray  # (N, M) offered service, bits
    arrivals: np.ndarray  # (N, M) bits
    weights: np.ndarray  # (N, M)

    @property
    def num_slots(self) -> int:
        return self.queues.shape[0]

    def __iter__(self):
        for n in range(self.num_slots):
            yield SlotRecord(
                slot=n + 1,
                queues_bits=self.queues[n],
                rates_bits=self.rates[n],
                arrivals_bits=self.arrivals[n],
                weights=self.weights[n],
            )


@dataclass
class StabilityReport:
    verdict: str  # "stable" | "unstable"
    slope_bits_per_slot: float
    threshold_bits_per_slot: float

    @property
    def stable(self) -> bool:
        return self.verdict == "stable"


@dataclass
class RunSummary:
    delay_slots: np.ndarray
    delay_ms: np.ndarray
    mean_delay_ms: float
    mean_queue_bits: np.ndarray
    max_queue_bits: np.ndarray
    stability: StabilityReport
    fallback_count: int
    wall_seconds: float
    config: SimConfig

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "delay_slots_per_user": [float(x) for x in self.delay_slots],
            "delay_ms_per_user": [float(x) for x in self.delay_ms],
            "mean_delay_ms": float(self.mean_delay_ms),
            "mean_queue_bits_per_user": [float(x) for x in self.mean_queue_bits],
            "max_queue_bits_per_user": [float(x) for x in self.max_queue_bits],
            "stability_verdict": self.stability.verdict,
            "stability_slope_bits_per_slot": float(self.stability.slope_bits_per_slot),
            "fallback_count": int(self.fallback_count),
            "wall_seconds": float(self.wall_seconds),
            "config": _config_echo(self.config),
        }


def _config_echo(config: SimConfig) -> dict:
    echo = asdict(config)
    echo["channel"]["power_delay_profile"] = list(config.channel.power_delay_profile)
    echo["arrivals"] = [asdict(a) for a in config.arrivals]
    return echo


def scheduler_bank(config: SimConfig):
    """Bank the policies see, derived from the master seed."""
    bank_cfg = replace(config.channel, seed=derive_seed(config.seed, "bank-sched"))
    return build_bank(bank_cfg, config.bank_size_scheduler)


def region_bank(config: SimConfig):
    bank_cfg = replace(config.channel, seed=derive_seed(config.seed, "bank-region"))
    return build_bank(bank_cfg, config.bank_size_region)


def run(config: SimConfig):
    """Simulate one configuration; returns (RunRecords, RunSummary).

    Per slot: draw a fading block, draw arrivals, let the policy decide on
    the pre-arrival backlog, serve, refill, update arrival averages.
    Deterministic given the master seed.
    """
    num_users = config.channel.num_users
    num_slots = config.num_slots
    t_slot = config.channel.block_duration_s
    rate_scale = config.slot.bits_per_nat_symbol  # nats/use -> bits/slot

    channel_cfg = replace(config.channel, seed=derive_seed(config.seed, "channel"))
    rng_channel = derive_rng(channel_cfg.seed, "blocks")
    rng_arrivals = derive_rng(config.seed, "arrivals")

    bank = None
    if config.policy in ("qps", "delay-opt"):
        bank = scheduler_bank(config)
    policy = make_policy(
        config.policy,
        config.power_budget,
        bank=bank,
        rate_scale=rate_scale,
        **config.policy_params,
    )

    mac = MacState.fresh(num_users, window=config.arrival_window_slots)
    queues = np.zeros((num_slots, num_users))
    rates = np.zeros((num_slots, num_users))
    arrivals_rec = np.zeros((num_slots, num_users))
    weights_rec = np.zeros((num_slots, num_users))
    fallback_quota = max(10, int(config.max_fallback_fraction * num_slots))

    start = time.perf_counter()
    for n in range(num_slots):
        channel = draw_block(channel_cfg, rng_channel)
        arrival_bits = draw_arrivals(config.arrivals, t_slot, rng_arrivals)
        decision = policy.decide(channel, mac)
        service_bits = decision.allocation.rates * rate_scale
        mac.queues = step_queues(mac.queues, service_bits, arrival_bits)
        update_avg_arrivals(mac, arrival_bits)
        queues[n] = mac.queues.backlog
        rates[n] = service_bits
        arrivals_rec[n] = arrival_bits
        weights_rec[n] = decision.weights
        fallbacks = getattr(policy, "fallback_count", 0)
        if fallbacks > fallback_quota:
            raise RuntimeError(
                f"policy fell back {fallbacks} times by slot {n + 1} "
                f"(quota {fallback_quota})"
            )
    wall = time.perf_counter() - start

    records = RunRecords(
        queues=queues, rates=rates, arrivals=arrivals_rec, weights=weights_rec
    )
    summary = summarize(records, config, wall, getattr(policy, "fallback_count", 0))
    return records, summary


def summarize(records: RunRecords, config: SimConfig, wall_seconds=0.0, fallbacks=0):
    post = slice(config.warmup_slots, None)
    q_post = records.queues[post]
    a_post = records.arrivals[post]
    empirical = a_post.mean(axis=0)
    # Users with no traffic and no backlog have zero delay by convention.
    abar = np.maximum(empirical, 1e-12)
    report = delay_metrics(q_post, abar, slot_duration_s=config.channel.block_duration_s)
    delay_slots = np.where(
        (empirical <= 0) & (q_post.max(axis=0) <= 0), 0.0, report.per_user_slots
    )
    delay_ms = delay_slots * config.channel.block_duration_s * 1e3
    if records.num_slots - config.warmup_slots >= MIN_PROBE_SLOTS:
        stability = stability_probe(records, config)
    else:
        # Too short for a meaningful verdict; the probe itself stays strict.
        stability = StabilityReport(
            verdict="unknown",
            slope_bits_per_slot=float("nan"),
            threshold_bits_per_slot=0.01 * float(config.mean_arrival_bits_per_slot().sum()),
        )
    return RunSummary(
        delay_slots=delay_slots,
        delay_ms=delay_ms,
        mean_delay_ms=float(delay_ms.mean()),
        mean_queue_bits=q_post.mean(axis=0),
        max_queue_bits=q_post.max(axis=0),
        stability=stability,
        fallback_count=fallbacks,
        wall_seconds=wall_seconds,
        config=config,
    )


def stability_probe(records: RunRecords, config: SimConfig) -> StabilityReport:
    """Finite-horizon stability proxy.

    Least-squares slope of the total backlog over the last half of the
    post-warmup window; stable when the slope is under 1% of the mean
    arrival bits per slot and the last-quarter mean backlog stays within
    twice the mid-run mean.
    """
    total = records.queues[config.warmup_slots :].sum(axis=1)
    n = total.shape[0]
    if n < MIN_PROBE_SLOTS:
        raise ValueError(
            f"stability probe needs >= {MIN_PROBE_SLOTS} post-warmup slots, got {n}"
        )
    half = total[n // 2 :]
    slope = float(np.polyfit(np.arange(half.shape[0]), half, 1)[0])
    arrival_bits = float(config.mean_arrival_bits_per_slot().sum())
    threshold = 0.01 * arrival_bits
    mid_mean = float(total[n // 4 : n // 2].mean())
    last_mean = float(total[3 * n // 4 :].mean())
    growth_ok = slope <= threshold
    level_ok = last_mean <= 2.0 * mid_mean + 1e-9 or last_mean <= arrival_bits
    verdict = "stable" if (growth_ok and level_ok) else "unstable"
    return StabilityReport(
        verdict=verdict,
        slope_bits_per_slot=slope,
        threshold_bits_per_slot=threshold,
    )


def load_sweep(base_config: SimConfig, points, policies, num_seeds):
    """Delay-versus-load experiment over (rho1, rho2) bit-rate points.

    Each point runs every policy with ``num_seeds`` master seeds; rows
    report mean and standard error of the average bit delay, flagged
    divergent (stable=False) when any seed's probe says unstable.
    """
    rows = []
    for rho in points:
        for policy in policies:
            delays = []
            stable = True
            for s in range(num_seeds):
                cfg = replace(
                    base_config,
                    arrivals=tuple(
                        ArrivalProcess(
                            packet_rate=rho[m] / proc.packet_size_bits,
                            packet_size_bits=proc.packet_size_bits,
                        )
                        for m, proc in enumerate(base_config.arrivals)
                    ),
                    policy=policy,
                    policy_params={},
                    seed=derive_seed(base_config.seed, f"sweep-{s}"),
                )
                _, summary = run(cfg)
                delays.append(summary.mean_delay_ms)
                stable = stable and summary.stability.stable
            delays = np.asarray(delays)
            stderr = float(delays.std(ddof=1) / math.sqrt(len(delays))) if len(delays) > 1 else 0.0
            rows.append(
                {
                    "rho1_bps": float(rho[0]),
                    "rho2_bps": float(rho[1]),
                    "policy": policy,
                    "mean_delay_ms": float(delays.mean()),
                    "stderr_ms": stderr,
                    "stable": stable,
                }
            )
    return rows


# ---------------------------------------------------------------------------
# File output
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    return f"{value:.12g}"


def write_trace(records: RunRecords, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for rec in records:
            for m in range(rec.queues_bits.shape[0]):
                writer.writerow(
                    [
                        rec.slot,
                        m,
                        _fmt(rec.queues_bits[m]),
                        _fmt(rec.rates_bits[m]),
                        _fmt(rec.arrivals_bits[m]),
                        _fmt(rec.weights[m]),
                    ]
                )


def write_summary(summary: RunSummary, path):
    with open(path, "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def region_table_bps(config: SimConfig, num_angles):
    """Two-user region sweep in bits/s (CSV columns theta,r1_bps,r2_bps)."""
    bank = region_bank(config)
    table = sweep_region(bank, num_angles, config.power_budget)
    to_bps = config.slot.bits_per_nat_symbol / config.channel.block_duration_s
    out = table.copy()
    out[:, 1:] *= to_bps
    return out


def write_region_csv(table_bps, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "r1_bps", "r2_bps"])
        for theta, r1, r2 in table_bps:
            writer.writerow([_fmt(theta), _fmt(r1), _fmt(r2)])


def write_delays_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=DELAYS_HEADER)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            out["stable"] = "true" if row["stable"] else "false"
            for key in ("rho1_bps", "rho2_bps", "mean_delay_ms", "stderr_ms"):
                out[key] = _fmt(row[key])
            writer.writerow(out)


def read_points_csv(path):
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if set(reader.fieldnames or []) < {"rho1_bps", "rho2_bps"}:
            raise ValueError("points CSV needs rho1_bps,rho2_bps columns")
        for row in reader:
            points.append((float(row["rho1_bps"]), float(row["rho2_bps"])))
    return points
