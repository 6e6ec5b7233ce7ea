"""Per-slot scheduling policies.

Every policy here is a weight-vector rule: it maps the MAC-layer state to a
weight vector (never looking at the current fading state) and then solves
one weighted sum-rate problem on the instantaneous region.  A policy
instance owns its caches; use one instance per simulation run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .capacity import (
    ErgodicBank,
    RateAllocation,
    RegionSolver,
    _zero_allocation,
    boundary_point_in_direction,
    solve_wsr_instant,
)
from .drain import DrainConvergenceError, DrainProblem, idle_state_prediction, weights_from_eta

logger = logging.getLogger(__name__)

POLICY_KINDS = ("delay-opt", "lqhpr", "qps", "max-sum")


@dataclass
class PolicyDecision:
    weights: np.ndarray
    allocation: RateAllocation
    policy: str
    diagnostics: dict = field(default_factory=dict)
    idle: bool = False


class Policy:
    """Base class: the idle rule and the common weight -> allocation step."""

    name = "base"

    def __init__(self, power_budget):
        self.power_budget = float(power_budget)

    def weights_for(self, mac):  # pragma: no cover - abstract
        raise NotImplementedError

    def decide(self, channel, mac) -> PolicyDecision:
        if not np.any(mac.queues.backlog > 0):
            return PolicyDecision(
                weights=np.zeros(channel.num_users),
                allocation=_zero_allocation(channel.num_users, channel.num_subcarriers),
                policy=self.name,
                idle=True,
            )
        weights, diagnostics = self.weights_for(mac)
        allocation = solve_wsr_instant(channel, weights, self.power_budget)
        return PolicyDecision(
            weights=weights,
            allocation=allocation,
            policy=self.name,
            diagnostics=diagnostics,
        )


class MaxSumRatePolicy(Policy):
    """Uniform weights: plain sum-rate maximization."""

    name = "max-sum"

    def weights_for(self, mac):
        return np.ones(mac.queues.backlog.shape[0]), {}

    def decide(self, channel, mac=None) -> PolicyDecision:
        # Keeps transmitting regardless of backlog (baseline behaviour).
        weights = np.ones(channel.num_users)
        allocation = solve_wsr_instant(channel, weights, self.power_budget)
        return PolicyDecision(weights=weights, allocation=allocation, policy=self.name)


class LqhprPolicy(Policy):
    """Longest-queue-highest-possible-rate: weights equal queue lengths."""

    name = "lqhpr"

    def weights_for(self, mac):
        return mac.queues.backlog.copy(), {}


class QpsPolicy(Policy):
    """Queue-proportional scheduling.

    The weight vector supports the boundary point of the sampled ergodic
    region along the current queue direction, so the expected service
    vector is proportional to the backlog.  The supporting weights are
    recomputed only when the queue direction moves by more than
    ``direction_tol``.
    """

    name = "qps"

    def __init__(self, bank, power_budget, direction_tol=0.01, ratio_tol=1e-3):
        super().__init__(power_budget)
        self.bank = bank
        self.direction_tol = direction_tol
        self.ratio_tol = ratio_tol
        self.solver = RegionSolver(bank, self.power_budget, quantum=1e-5)
        self._last_unit = None
        self._last_weights = None
        self._memo = {}

    def weights_for(self, mac):
        q = mac.queues.backlog
        unit = q / q.sum()
        if (
            self._last_unit is not None
            and np.max(np.abs(unit - self._last_unit)) <= self.direction_tol
        ):
            return self._last_weights.copy(), {"support_rates": None}
        key = tuple((unit / 5e-3).round().astype(np.int64).tolist())
        hit = self._memo.get(key)
        if hit is None:
            rates, mu = boundary_point_in_direction(
                self.bank,
                unit,
                self.power_budget,
                ratio_tol=self.ratio_tol,
                solver=self.solver,
            )
            hit = (mu, rates)
            self._memo[key] = hit
        mu, rates = hit
        self._last_unit = unit.copy()
        self._last_weights = mu.copy()
        return mu.copy(), {"support_rates": rates.copy()}


class DelayOptimalPolicy(Policy):
    """Idle-state-prediction scheduling.

    Every slot: re-solve the static drain problem on the sampled ergodic
    region from the current backlog and windowed arrival averages, then use
    the first slot of the optimal weight schedule on the current channel.
    Falls back to queue-length weights for a slot if the drain search does
    not converge.
    """

    name = "delay-opt"

    def __init__(
        self,
        bank,
        power_budget,
        rate_scale=1.0,
        eta_tol=1e-3,
        weight_quantum=1e-4,
        warm_start=True,
    ):
        super().__init__(power_budget)
        self.bank = bank
        self.rate_scale = float(rate_scale)
        self.eta_tol = eta_tol
        self.solver = RegionSolver(
            bank, self.power_budget, rate_scale=self.rate_scale, quantum=weight_quantum
        )
        self.warm_start = warm_start
        self._last_eta = None
        self.fallback_count = 0

    def weights_for(self, mac):
        q = mac.queues.backlog
        problem = DrainProblem(
            initial_queues=q,
            avg_arrival_rates=mac.avg_arrivals,
            region=self.solver,
            eta_tol=self.eta_tol,
        )
        try:
            warm = self._last_eta if self.warm_start else None
            solution = idle_state_prediction(problem, warm_start=warm)
        except DrainConvergenceError as err:
            self.fallback_count += 1
            logger.warning("drain search failed (%s); falling back to queue weights", err)
            return q.copy(), {"fallback": True}
        self._last_eta = solution.eta.copy()
        weights = weights_from_eta(solution.eta, mac.avg_arrivals, 1)
        return weights, {"eta": solution.eta.copy()}


def make_policy(kind, power_budget, bank=None, rate_scale=1.0, **params) -> Policy:
    if kind == "max-sum":
        return MaxSumRatePolicy(power_budget)
    if kind == "lqhpr":
        return LqhprPolicy(power_budget)
    if kind == "qps":
        if bank is None:
            raise ValueError("qps needs an ergodic bank")
        return QpsPolicy(bank, power_budget, **params)
    if kind == "delay-opt":
        if bank is None:
            raise ValueError("delay-opt needs an ergodic bank")
        return DelayOptimalPolicy(bank, power_budget, rate_scale=rate_scale, **params)
    raise ValueError(f"unknown policy {kind!r}; choose from {POLICY_KINDS}")


# Functional entry points over one-shot policy instances (simulation runs
# should hold a policy object instead, for the caches).


def lqhpr_decide(channel, mac, power_budget):
    return LqhprPolicy(power_budget).decide(channel, mac)


def qps_decide(channel, mac, bank, power_budget, **params):
    return QpsPolicy(bank, power_budget, **params).decide(channel, mac)


def delay_optimal_decide(channel, mac, bank, power_budget, **params):
    return DelayOptimalPolicy(bank, power_budget, **params).decide(channel, mac)


def max_sum_rate_decide(channel, power_budget):
    return MaxSumRatePolicy(power_budget).decide(channel)
