"""Monte Carlo of the complete protocol, independent of the analytic solver.

One renewal cycle runs contention observations until the winner's first-hop
SNR clears the policy threshold, transmits over the first hop, then probes
the second hop until the chosen rate is achievable.  Throughput is the
ratio-of-sums estimator total delivered / total elapsed over independent
cycles, each driven by its own counter-based random stream so that results
do not depend on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from numba.extending import register_jitable

from .contention import MINISLOT_CAP, _observation_core, transmit_count_cdf
from .model import SystemParams, _draw_snr
from .stopping_solver import StoppingPolicy

__all__ = ["CycleResult", "ThroughputEstimate", "run_cycle", "estimate_throughput"]


@dataclass(frozen=True)
class CycleResult:
    delivered: float    # traffic delivered this cycle [bits/Hz]
    elapsed: float      # full cycle duration [s]
    observations: int   # contention rounds until the stop decision
    hop2_probes: int    # second-hop probes until delivery
    stop_snr: float     # winner's first-hop SNR at the stopping observation


@dataclass(frozen=True)
class ThroughputEstimate:
    mean: float         # total delivered / total elapsed [bits/s/Hz]
    stderr: float       # delta-method standard error of the ratio
    cycles: int
    total_time: float   # sum of cycle durations [s]


@register_jitable
def _cycle_core(
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
            elapsed += cts  # give-up CTS; contention restarts immediately

    elapsed += cts + coherence  # stop CTS plus the first-hop data slot
    required = min(snr, rate_cap)
    rate = math.log2(1.0 + required)

    probes = 0
    delivered = False
    while not delivered:
        probes += 1
        # Each probe is an RTS/CTS exchange plus one coherence slot: the
        # wait after a failed probe and the data transmission after the
        # final one cost the same, so every probe charges tau2.
        elapsed += rts + cts + coherence
        if _draw_snr(rng, rho_g) >= required:
            delivered = True

    check = (
        observation_time
        + observations * cts
        + coherence
        + probes * (rts + cts + coherence)
    )
    if abs(elapsed - check) > 1e-9 * check:
        raise RuntimeError("cycle accounting mismatch")
    return rate * coherence, elapsed, observations, probes, snr


@numba.njit(cache=True)
def _cycle_jit(
    rng, cdf, minislot, rts, cts, timeout, coherence, rho_f, rho_g,
    threshold, rate_cap, minislot_cap,
):
    return _cycle_core(
        rng, cdf, minislot, rts, cts, timeout, coherence, rho_f, rho_g,
        threshold, rate_cap, minislot_cap,
    )


def run_cycle(policy: StoppingPolicy, params: SystemParams, rng) -> CycleResult:
    """One protocol cycle on `rng` (anything with a U[0,1) random())."""
    delivered, elapsed, observations, probes, snr = _cycle_core(
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
        hop2_probes=probes,
        stop_snr=snr,
    )


def _rekey(bitgen: np.random.Philox, seed: int, index: int) -> None:
    """Point `bitgen` at the stream keyed by (seed, index).

    Equivalent to constructing a fresh Philox(key=[seed, index]) without
    the per-cycle construction cost: zero the counter, overwrite the key,
    and mark the output buffer exhausted.
    """
    state = bitgen.state
    state["state"]["counter"][:] = 0
    state["state"]["key"][0] = seed
    state["state"]["key"][1] = index
    state["buffer_pos"] = 4
    bitgen.state = state


def _ratio_estimate(
    sum_y: float, sum_t: float, sum_yy: float, sum_yt: float, sum_tt: float, n: int
) -> ThroughputEstimate:
    mean = sum_y / sum_t
    # Delta method for a ratio of sums: the per-cycle residuals y - mean*t
    # have zero sum by construction, so their variance needs no centering.
    residual_var = (sum_yy - 2.0 * mean * sum_yt + mean * mean * sum_tt) / (n - 1)
    mean_t = sum_t / n
    stderr = math.sqrt(max(residual_var, 0.0) / n) / mean_t
    return ThroughputEstimate(mean=mean, stderr=stderr, cycles=n, total_time=sum_t)


def estimate_throughput(
    policy: StoppingPolicy, params: SystemParams, cycles: int, seed: int
) -> ThroughputEstimate:
    """Ratio-of-sums throughput over `cycles` independent cycles.

    Cycle i draws from the stream keyed by (seed, i), so the estimate is
    reproducible bit for bit and independent of batching.
    """
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
        y, t, _, _, _ = _cycle_jit(
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
