"""Probe-once comparison policy.

Same contention and first-hop structure as the relay-waiting policy, but the
relay probes the second hop exactly once: if the probed channel cannot carry
the chosen rate, the traffic is lost and contention restarts.  The rate
target and stopping threshold are re-optimized for this restricted rule, so
the comparison is against the best policy of the class rather than a detuned
one.  Because probe-once is a feasible strategy of the same stopping
problem, its optimal throughput can never exceed the relay-waiting one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from numba.extending import register_jitable

from .contention import (
    MINISLOT_CAP,
    _observation_core,
    mean_observation_duration,
    transmit_count_cdf,
)
from .model import SystemParams, _draw_snr
from .protocol_sim import CycleResult, ThroughputEstimate, _ratio_estimate, _rekey
from .stopping_solver import (
    SolverDiagnostics,
    SolverError,
    _default_quad_tol,
    _expected_best_reward,
    _solve_ratio_fixed_point,
    expected_v1,
    rate_for_cap,
)

__all__ = [
    "ProbeOncePolicy",
    "probe_once_stop_reward",
    "probe_once_rate_target",
    "solve_probe_once_policy",
    "run_probe_once_cycle",
    "estimate_probe_once_throughput",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_TOL = 1e-8
_UNIMODAL_GRID = 256


@dataclass(frozen=True)
class ProbeOncePolicy:
    """Solved probe-once policy; fields mirror StoppingPolicy."""

    lambda_star: float
    rate_cap_snr: float
    hop1_threshold: float
    residuals: SolverDiagnostics


def probe_once_stop_reward(
    lam: float, required_snr: float, params: SystemParams
) -> float:
    """Net transformed reward of stopping and probing once at `required_snr`."""
    return expected_v1(lam, required_snr, params) - lam * (
        params.cts + params.coherence
    )


def _stop_reward_prime(lam: float, required_snr: float, params: SystemParams) -> float:
    # Derivative of the stop reward in the rate target; only the single-probe
    # value depends on it.
    rho = params.mean_snr_hop2
    survival = math.exp(-required_snr / rho)
    return (
        params.coherence
        * survival
        * (1.0 / ((1.0 + required_snr) * math.log(2.0)) - (rate_for_cap(required_snr) - lam) / rho)
    )


def _golden_max(f, lo: float, hi: float, xtol: float) -> float:
    """Argmax of a unimodal f on [lo, hi] to within xtol."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _assert_unimodal(f, lo: float, hi: float) -> None:
    """Grid check that f rises then falls on [lo, hi], up to rounding noise."""
    xs = np.linspace(lo, hi, _UNIMODAL_GRID)
    ys = np.array([f(x) for x in xs])
    noise = 1e-12 * max(1.0, float(np.max(np.abs(ys))))
    diffs = np.diff(ys)
    falling = False
    for d in diffs:
        if falling and d > noise:
            raise SolverError("probe-once stop reward is not unimodal in the rate target")
        if d < -noise:
            falling = True


def probe_once_rate_target(lam: float, snr_hop1: float, params: SystemParams) -> float:
    """Best rate-target SNR for one probe, searched over [0, snr_hop1]."""
    if snr_hop1 < 0.0:
        raise ValueError("snr_hop1 must be nonnegative")
    if snr_hop1 == 0.0:
        return 0.0
    return _golden_max(
        lambda r: probe_once_stop_reward(lam, r, params), 0.0, snr_hop1, _GOLDEN_TOL
    )


def _rate_target_peak(lam: float, params: SystemParams) -> float:
    """Unconstrained maximizer of the probe-once stop reward.

    The reward rises to a single interior peak and then decays, so the
    constrained maximizer at first-hop SNR r is simply min(r, peak).
    """
    hi = 1.0
    doublings = 0
    while probe_once_stop_reward(lam, hi, params) > probe_once_stop_reward(
        lam, 0.5 * hi, params
    ):
        hi *= 2.0
        doublings += 1
        if doublings > 200:
            raise SolverError("probe-once rate-target peak not bracketed")
    hi *= 2.0  # one spare doubling so the peak sits strictly inside
    _assert_unimodal(lambda r: probe_once_stop_reward(lam, r, params), 0.0, hi)
    return _golden_max(
        lambda r: probe_once_stop_reward(lam, r, params), 0.0, hi, _GOLDEN_TOL
    )


def solve_probe_once_policy(
    params: SystemParams, tol: float | None = None
) -> ProbeOncePolicy:
    """Solve the probe-once policy with the same fixed-point machinery."""
    if tol is None:
        tol = 1e-9 * params.coherence
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    quad_tol = _default_quad_tol(params)
    tau1 = mean_observation_duration(params)

    def gap(lam: float) -> float:
        cap = _rate_target_peak(lam, params)
        value, _ = _expected_best_reward(
            lam,
            lambda r: probe_once_stop_reward(lam, r, params),
            cap,
            params,
            quad_tol,
        )
        return value - lam * tau1

    lam_star, iterations, residual = _solve_ratio_fixed_point(gap, tol)
    cap = _rate_target_peak(lam_star, params)
    _, threshold = _expected_best_reward(
        lam_star,
        lambda r: probe_once_stop_reward(lam_star, r, params),
        cap,
        params,
        quad_tol,
    )
    if not math.isfinite(threshold):
        raise SolverError(
            "probe-once policy would never transmit: stopping never beats giving up"
        )
    return ProbeOncePolicy(
        lambda_star=lam_star,
        rate_cap_snr=cap,
        hop1_threshold=threshold,
        residuals=SolverDiagnostics(
            rate_cap_residual=abs(_stop_reward_prime(lam_star, cap, params)),
            fixed_point_residual=residual,
            bisection_iterations=iterations,
        ),
    )


@register_jitable
def _probe_once_cycle_core(
    rng, cdf, minislot, rts, cts, timeout, coherence, rho_f, rho_g,
    threshold, rate_cap, minislot_cap,
):
    elapsed = 0.0
    observation_time = 0.0
    observations = 0
    snr = 0.0
    stopped = False
    while not stopped:
        duration, snr, _, _ = _observation_core(
            rng, cdf, minislot, rts, timeout, rho_f, minislot_cap
        )
        observations += 1
        observation_time += duration
        elapsed += duration
        if snr >= threshold:
            stopped = True
        else:
            elapsed += cts

    elapsed += cts + coherence  # stop CTS plus the first-hop data slot
    required = min(snr, rate_cap)
    elapsed += rts + cts  # the single probe exchange
    if _draw_snr(rng, rho_g) >= required:
        elapsed += coherence
        delivered = math.log2(1.0 + required) * coherence
    else:
        delivered = 0.0  # traffic lost; contention restarts

    check = (
        observation_time
        + observations * cts
        + coherence
        + rts
        + cts
        + (coherence if delivered > 0.0 else 0.0)
    )
    if abs(elapsed - check) > 1e-9 * check:
        raise RuntimeError("cycle accounting mismatch")
    return delivered, elapsed, observations, snr


@numba.njit(cache=True)
def _probe_once_cycle_jit(
    rng, cdf, minislot, rts, cts, timeout, coherence, rho_f, rho_g,
    threshold, rate_cap, minislot_cap,
):
    return _probe_once_cycle_core(
        rng, cdf, minislot, rts, cts, timeout, coherence, rho_f, rho_g,
        threshold, rate_cap, minislot_cap,
    )


def run_probe_once_cycle(
    policy: ProbeOncePolicy, params: SystemParams, rng
) -> CycleResult:
    """One probe-once cycle on `rng` (anything with a U[0,1) random())."""
    delivered, elapsed, observations, snr = _probe_once_cycle_core(
        rng,
        transmit_count_cdf(params),
        params.minislot,
        params.rts,
        params.cts,
        params.timeout,
        params.coherence,
        params.mean_snr_hop1,
        params.mean_snr_hop2,
        policy.hop1_threshold,
        policy.rate_cap_snr,
        MINISLOT_CAP,
    )
    return CycleResult(
        delivered=delivered,
        elapsed=elapsed,
        observations=observations,
        hop2_probes=1,
        stop_snr=snr,
    )


def estimate_probe_once_throughput(
    policy: ProbeOncePolicy, params: SystemParams, cycles: int, seed: int
) -> ThroughputEstimate:
    """Ratio-of-sums throughput of the probe-once policy; see protocol_sim."""
    if cycles < 2:
        raise ValueError("cycles must be >= 2")
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    cdf = transmit_count_cdf(params)
    bitgen = np.random.Philox(key=[seed, 0])
    rng = np.random.Generator(bitgen)

    sum_y = sum_t = sum_yy = sum_yt = sum_tt = 0.0
    for index in range(cycles):
        _rekey(bitgen, seed, index)
        y, t, _, _ = _probe_once_cycle_jit(
            rng,
            cdf,
            params.minislot,
            params.rts,
            params.cts,
            params.timeout,
            params.coherence,
            params.mean_snr_hop1,
            params.mean_snr_hop2,
            policy.hop1_threshold,
            policy.rate_cap_snr,
            MINISLOT_CAP,
        )
        sum_y += y
        sum_t += t
        sum_yy += y * y
        sum_yt += y * t
        sum_tt += t * t
    return _ratio_estimate(sum_y, sum_t, sum_yy, sum_yt, sum_tt, cycles)
