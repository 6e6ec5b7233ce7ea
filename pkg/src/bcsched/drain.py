"""Static drain problem: empty given buffers in minimum average bit delay.

With no further arrivals and a fixed region, the delay-minimal schedule is
a weight trajectory parameterized only by per-user idle-onset times eta:
user i keeps weight (eta_i - n + 1) / abar_i until slot n passes eta_i and
zero afterwards.  The solver grows each user's eta until its buffer just
empties at the slot after eta (sweeping users by initial backlog-to-rate
ratio, repeating until the vector settles).

Because the per-slot rate allocation depends only on the weights, never on
the remaining backlog, each user's queue follows the closed form
q_i(n) = max(q_i(1) - cumulative service, 0); the searches exploit this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import ErgodicBank, RegionSolver


class DrainConvergenceError(RuntimeError):
    """Idle-state search failed; carries the last iterate for diagnosis."""

    def __init__(self, message, last_eta=None):
        super().__init__(message)
        self.last_eta = None if last_eta is None else np.asarray(last_eta)


def ceil_slot(eta) -> int:
    """Smallest integer strictly greater than eta (the slot at which an
    emptied buffer is inspected)."""
    return int(math.floor(eta)) + 1


def weights_from_eta(eta, avg_arrivals, slot) -> np.ndarray:
    """Weight vector of the drain schedule at a 1-based slot index."""
    eta = np.asarray(eta, dtype=float)
    abar = np.asarray(avg_arrivals, dtype=float)
    return np.where(slot <= eta, (eta - slot + 1.0) / abar, 0.0)


@dataclass
class DrainProblem:
    """Initial backlog, arrival averages and the region to drain over."""

    initial_queues: np.ndarray  # bits
    avg_arrival_rates: np.ndarray  # bits per slot, positive
    region: object  # ChannelState | ErgodicBank | RegionSolver
    power_budget: float = None
    rate_scale: float = 1.0  # converts solver rate units into bits/slot
    eta_tol: float = 1e-3
    empty_tol: float = None  # default 1e-6 * total initial backlog
    horizon_cap: int = None
    weight_quantum: float = 1e-4

    def __post_init__(self):
        self.initial_queues = np.asarray(self.initial_queues, dtype=float)
        self.avg_arrival_rates = np.asarray(self.avg_arrival_rates, dtype=float)
        if np.any(self.initial_queues < 0):
            raise ValueError("initial queues must be nonnegative")
        if np.any(self.avg_arrival_rates <= 0):
            raise ValueError("average arrival rates must be positive")
        if self.initial_queues.shape != self.avg_arrival_rates.shape:
            raise ValueError("queue/arrival dimension mismatch")
        if self.empty_tol is None:
            self.empty_tol = max(1e-6 * self.initial_queues.sum(), 1e-12)
        if not self.eta_tol > 0:
            raise ValueError("eta tolerance must be positive")
        self._solver = None

    @property
    def num_users(self) -> int:
        return self.initial_queues.shape[0]

    def region_solver(self) -> RegionSolver:
        if self._solver is None:
            if isinstance(self.region, RegionSolver):
                self._solver = self.region
            else:
                if self.power_budget is None:
                    raise ValueError("power budget required with a raw region")
                self._solver = RegionSolver(
                    self.region,
                    self.power_budget,
                    rate_scale=self.rate_scale,
                    quantum=self.weight_quantum,
                )
        return self._solver


@dataclass
class DrainTrajectory:
    """Slotwise drain record; row n of ``queues`` is the backlog at the
    start of slot n+1, ``signed`` keeps the pre-clip values."""

    queues: np.ndarray  # (N+1, M)
    signed: np.ndarray  # (N+1, M)
    rates: np.ndarray  # (N, M)
    weights: np.ndarray  # (N, M)
    capped: bool = False

    def queue_at(self, slot) -> np.ndarray:
        """Backlog at the start of a 1-based slot (frozen past the end)."""
        idx = min(slot - 1, self.queues.shape[0] - 1)
        return self.queues[idx]


@dataclass
class DrainSolution:
    eta: np.ndarray
    weight_schedule: np.ndarray  # (N, M)
    trajectory: DrainTrajectory
    total_delay: float
    iterates: list = field(default_factory=list)


def simulate_drain(problem: DrainProblem, eta, raise_on_cap=False) -> DrainTrajectory:
    """Run the drain schedule for a candidate eta vector.

    Serves argmax weights@rates each slot and clips service at the
    remaining backlog; stops when every queue is inside the emptiness
    tolerance, when all weights have expired, or at the horizon cap.
    """
    solver = problem.region_solver()
    eta = np.asarray(eta, dtype=float)
    q = problem.initial_queues.copy()
    queues = [q.copy()]
    signed = [q.copy()]
    rates = []
    weights = []
    n_max = _horizon(problem, eta)
    capped = False
    slot = 0
    while True:
        slot += 1
        w = weights_from_eta(eta, problem.avg_arrival_rates, slot)
        if not w.any():
            capped = bool(np.any(q > problem.empty_tol))
            break
        r = solver.rates(w)
        pre_clip = q - r
        q = np.maximum(pre_clip, 0.0)
        queues.append(q.copy())
        signed.append(pre_clip)
        rates.append(np.array(r))
        weights.append(w)
        if np.all(q <= problem.empty_tol):
            break
        if slot >= n_max:
            capped = True
            break
    if capped and raise_on_cap:
        raise DrainConvergenceError(
            f"queues still positive after {slot} slots", last_eta=eta
        )
    return DrainTrajectory(
        queues=np.array(queues),
        signed=np.array(signed),
        rates=np.array(rates) if rates else np.zeros((0, problem.num_users)),
        weights=np.array(weights) if weights else np.zeros((0, problem.num_users)),
        capped=capped,
    )


def static_delay(queue_trajectory, avg_arrivals) -> float:
    """Drain objective: sum over slots and users of backlog / abar.

    No window normalization here; this is the quantity the idle-state
    schedule minimizes.
    """
    q = np.atleast_2d(np.asarray(queue_trajectory, dtype=float))
    abar = np.asarray(avg_arrivals, dtype=float)
    return float((q / abar).sum())


def _horizon(problem, eta=None):
    if problem.horizon_cap is not None:
        return problem.horizon_cap
    bound = 0
    if eta is not None and np.asarray(eta).size:
        bound = int(max(np.ceil(np.max(eta)), 1)) + 1
    return max(1000, 4 * bound)


def _empties_by(problem, solver, eta, user, n_max):
    """Whether ``user``'s backlog is inside tolerance at the slot after its
    idle onset.  Uses the closed-form cumulative service."""
    target = problem.initial_queues[user] - problem.empty_tol
    if target <= 0:
        return True
    test_slot = ceil_slot(eta[user])
    if test_slot - 1 > n_max:
        raise DrainConvergenceError(
            f"drain horizon {n_max} exceeded while growing user {user}",
            last_eta=eta,
        )
    served = 0.0
    abar = problem.avg_arrival_rates
    for slot in range(1, test_slot):
        w = weights_from_eta(eta, abar, slot)
        if not w.any():
            break
        served += solver.rates(w)[user]
        if served >= target:
            return True
    return served >= target


def _search_eta(problem, solver, eta, user, n_max, allow_shrink):
    """Smallest eta for one user (others fixed) whose buffer is empty at
    the slot after it: geometric bracketing, then bisection to tolerance."""

    def emptied(x):
        trial = eta.copy()
        trial[user] = x
        return _empties_by(problem, solver, trial, user, n_max)

    tol = problem.eta_tol
    cur = eta[user]
    if emptied(cur):
        if not allow_shrink:
            return cur
        hi, lo = cur, cur
        while lo > 0.0:
            lo = lo / 1.5 - tol
            if lo <= 0.0:
                lo = 0.0
                break
            if not emptied(lo):
                break
        if lo == 0.0 and emptied(0.0):
            return 0.0
    else:
        lo = cur
        hi = max(cur, 1.0) * 1.5
        while not emptied(hi):
            lo = hi
            hi *= 1.5
            if ceil_slot(hi) - 1 > n_max:
                raise DrainConvergenceError(
                    f"user {user} cannot be drained within {n_max} slots",
                    last_eta=eta,
                )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if emptied(mid):
            hi = mid
        else:
            lo = mid
    return hi


def idle_state_prediction(
    problem: DrainProblem, warm_start=None, max_sweeps=50
) -> DrainSolution:
    """Iterative idle-onset search.

    Starts every user at the first emptying time under backlog-normalized
    weights 1/abar, then sweeps users in decreasing backlog-to-rate order,
    each time advancing eta to the point where that user's buffer just
    empties.  Sweeps repeat until no component moves more than the
    tolerance; iterates grow monotonically (a warm start may shrink once,
    on the first sweep only).
    """
    solver = problem.region_solver()
    q1 = problem.initial_queues
    abar = problem.avg_arrival_rates
    num_users = problem.num_users
    active = q1 > problem.empty_tol
    eta = np.zeros(num_users)
    if not active.any():
        trajectory = simulate_drain(problem, eta)
        return DrainSolution(
            eta=eta,
            weight_schedule=trajectory.weights,
            trajectory=trajectory,
            total_delay=static_delay(trajectory.queues, abar),
            iterates=[eta.copy()],
        )

    mu0 = np.where(active, 1.0 / abar, 0.0)
    r0 = np.array(solver.rates(mu0))
    with np.errstate(divide="ignore"):
        ratios = np.where(r0 > 0, q1 / np.where(r0 > 0, r0, 1.0), np.inf)
    finite = active & np.isfinite(ratios)
    if not finite.any():
        raise DrainConvergenceError(
            "no active user receives rate under initial weights", last_eta=eta
        )
    eta[active] = ratios[finite].min()
    if warm_start is not None:
        warm = np.asarray(warm_start, dtype=float)
        eta = np.where(active, np.maximum(warm, 0.0), 0.0)
    order = sorted(np.flatnonzero(active), key=lambda m: (-ratios[m], m))
    if problem.horizon_cap is not None:
        n_max = problem.horizon_cap
    else:
        n_max = max(100, int(math.ceil(10.0 * q1.sum() / r0[finite].min())))

    iterates = [eta.copy()]
    converged = False
    for sweep in range(max_sweeps):
        prev = eta.copy()
        for user in order:
            allow_shrink = sweep == 0 and warm_start is not None
            eta[user] = _search_eta(problem, solver, eta, user, n_max, allow_shrink)
        iterates.append(eta.copy())
        if np.max(np.abs(eta - prev)) < problem.eta_tol:
            converged = True
            break
    if not converged:
        raise DrainConvergenceError(
            f"idle-state sweeps did not settle within {max_sweeps} iterations",
            last_eta=eta,
        )
    trajectory = simulate_drain(problem, eta, raise_on_cap=True)
    return DrainSolution(
        eta=eta,
        weight_schedule=trajectory.weights,
        trajectory=trajectory,
        total_delay=static_delay(trajectory.queues, abar),
        iterates=iterates,
    )
