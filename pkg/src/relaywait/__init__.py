"""Optimal relay-waiting channel access for two-hop decode-and-forward links.

Solves the throughput-optimal stopping policy (rate lambda*, rate cap,
first-hop threshold) for a contention-based network where a relay may keep
probing its second hop, validates it with an independent protocol-level
Monte Carlo, and compares against a re-optimized probe-once baseline.
"""

from .baseline import (
    ProbeOncePolicy,
    estimate_probe_once_throughput,
    probe_once_rate_target,
    probe_once_stop_reward,
    run_probe_once_cycle,
    solve_probe_once_policy,
)
from .contention import (
    ObservationOutcome,
    mean_observation_duration,
    sample_observation_durations,
    simulate_observation,
)
from .model import ChannelDist, SystemParams
from .protocol_sim import (
    CycleResult,
    ThroughputEstimate,
    estimate_throughput,
    run_cycle,
)
from .stopping_solver import (
    SolverDiagnostics,
    SolverError,
    StoppingPolicy,
    expected_v1,
    expected_v_inf,
    expected_v_l,
    net_stop_reward,
    optimality_gap,
    rate_for_cap,
    solve_policy,
    solve_rate_cap,
)

__version__ = "0.1.0"

__all__ = [
    "SystemParams",
    "ChannelDist",
    "ObservationOutcome",
    "mean_observation_duration",
    "simulate_observation",
    "sample_observation_durations",
    "SolverError",
    "SolverDiagnostics",
    "StoppingPolicy",
    "rate_for_cap",
    "expected_v1",
    "expected_v_inf",
    "expected_v_l",
    "solve_rate_cap",
    "net_stop_reward",
    "optimality_gap",
    "solve_policy",
    "CycleResult",
    "ThroughputEstimate",
    "run_cycle",
    "estimate_throughput",
    "ProbeOncePolicy",
    "probe_once_stop_reward",
    "probe_once_rate_target",
    "solve_probe_once_policy",
    "run_probe_once_cycle",
    "estimate_probe_once_throughput",
]
