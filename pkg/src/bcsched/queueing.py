"""Buffer dynamics, arrival processes and the average bit-delay metric."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

# Floor applied to windowed average arrival rates wherever they are used as
# divisors (users with no history otherwise break the weight formulas).
ARRIVAL_RATE_FLOOR = 1e-6


@dataclass
class QueueState:
    """Per-user buffer occupancies in bits at the start of a slot."""

    backlog: np.ndarray  # (M,) bits
    slot_index: int = 0

    def __post_init__(self):
        self.backlog = np.asarray(self.backlog, dtype=float)
        if np.any(self.backlog < 0):
            raise ValueError("queues must be nonnegative")

    @classmethod
    def empty(cls, num_users):
        return cls(backlog=np.zeros(num_users), slot_index=0)


@dataclass(frozen=True)
class ArrivalProcess:
    """Poisson packet arrivals with a constant packet size."""

    packet_rate: float  # packets per second
    packet_size_bits: float = 1000.0

    def __post_init__(self):
        if self.packet_rate < 0 or self.packet_size_bits <= 0:
            raise ValueError("invalid arrival process")

    @property
    def mean_bit_rate(self) -> float:
        """Expected bit arrival rate, bits per second."""
        return self.packet_size_bits * self.packet_rate


@dataclass
class MacState:
    """Queue lengths plus windowed arrival statistics seen by the policies."""

    queues: QueueState
    avg_arrivals: np.ndarray  # (M,) bits per slot, floored
    window: int = 1000
    _history: deque = field(default_factory=deque, repr=False)
    _running_sum: np.ndarray = None

    def __post_init__(self):
        self.avg_arrivals = np.maximum(
            np.asarray(self.avg_arrivals, dtype=float), ARRIVAL_RATE_FLOOR
        )
        if self._running_sum is None:
            self._running_sum = np.zeros_like(self.avg_arrivals)

    @classmethod
    def fresh(cls, num_users, window=1000):
        return cls(
            queues=QueueState.empty(num_users),
            avg_arrivals=np.zeros(num_users),
            window=window,
        )


def step_queues(state: QueueState, service_bits, arrival_bits) -> QueueState:
    """One slot of the buffer recurrence: drain then refill.

    q' = max(0, q - r) + a, slot index incremented.
    """
    r = np.asarray(service_bits, dtype=float)
    a = np.asarray(arrival_bits, dtype=float)
    if r.shape != state.backlog.shape or a.shape != state.backlog.shape:
        raise ValueError("service/arrival dimension mismatch")
    new_q = np.maximum(state.backlog - r, 0.0) + a
    return QueueState(backlog=new_q, slot_index=state.slot_index + 1)


def draw_arrivals(processes, slot_duration_s, rng) -> np.ndarray:
    """Bits arriving in one slot: Poisson packet counts times packet size."""
    bits = np.zeros(len(processes))
    for m, proc in enumerate(processes):
        mean_packets = proc.packet_rate * slot_duration_s
        if mean_packets > 0:
            bits[m] = rng.poisson(mean_packets) * proc.packet_size_bits
    return bits


def update_avg_arrivals(mac: MacState, arrival_bits, window=None) -> MacState:
    """Sliding-window mean of per-slot arrivals, floored away from zero."""
    if window is not None:
        mac.window = int(window)
    if mac.window < 1:
        raise ValueError("window must be >= 1")
    a = np.asarray(arrival_bits, dtype=float)
    mac._history.append(a)
    mac._running_sum = mac._running_sum + a
    while len(mac._history) > mac.window:
        mac._running_sum = mac._running_sum - mac._history.popleft()
    mean = mac._running_sum / len(mac._history)
    mac.avg_arrivals = np.maximum(mean, ARRIVAL_RATE_FLOOR)
    return mac


@dataclass
class DelayReport:
    """Average per-bit waiting time, per user and averaged."""

    per_user_slots: np.ndarray
    window_slots: int
    slot_duration_s: float = None

    @property
    def average_slots(self) -> float:
        return float(self.per_user_slots.mean())

    @property
    def per_user_ms(self) -> np.ndarray:
        if self.slot_duration_s is None:
            raise ValueError("no slot duration attached")
        return self.per_user_slots * self.slot_duration_s * 1e3

    @property
    def average_ms(self) -> float:
        return float(self.per_user_ms.mean())


def delay_metrics(queue_trajectory, avg_arrivals, slot_duration_s=None) -> DelayReport:
    """Average bit delay of a queue trace.

    D_i = mean_n q_i(n) / abar_i, in slots: the time-averaged backlog
    normalized by the average per-slot bit arrival rate.  (The window
    normalization keeps the metric finite in steady state.)
    """
    q = np.atleast_2d(np.asarray(queue_trajectory, dtype=float))
    if q.size == 0:
        raise ValueError("empty queue trajectory")
    abar = np.asarray(avg_arrivals, dtype=float)
    if np.any(abar <= 0):
        raise ValueError("average arrival rates must be positive")
    per_user = q.mean(axis=0) / abar
    return DelayReport(
        per_user_slots=per_user,
        window_slots=q.shape[0],
        slot_duration_s=slot_duration_s,
    )
