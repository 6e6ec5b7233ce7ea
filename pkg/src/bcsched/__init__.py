"""Simulation lab for downlink OFDM broadcast-channel scheduling."""

from .capacity import (
    ChannelState,
    ErgodicBank,
    PowerBudget,
    RateAllocation,
    RegionSolver,
    SolverError,
    boundary_point_in_direction,
    brute_force_wsr,
    crossing_point,
    layer_partition,
    marginal_utility,
    rates_from_powers,
    solve_wsr_ergodic,
    solve_wsr_instant,
    sweep_region,
)
from .channel import ChannelConfig, SlotConfig, build_bank, derive_rng, derive_seed, draw_block
from .drain import (
    DrainConvergenceError,
    DrainProblem,
    DrainSolution,
    idle_state_prediction,
    simulate_drain,
    static_delay,
    weights_from_eta,
)
from .harness import SimConfig, load_config, load_sweep, run, stability_probe
from .queueing import (
    ArrivalProcess,
    DelayReport,
    MacState,
    QueueState,
    delay_metrics,
    draw_arrivals,
    step_queues,
    update_avg_arrivals,
)
from .schedulers import (
    POLICY_KINDS,
    DelayOptimalPolicy,
    LqhprPolicy,
    MaxSumRatePolicy,
    PolicyDecision,
    QpsPolicy,
    make_policy,
)

__version__ = "0.1.0"
