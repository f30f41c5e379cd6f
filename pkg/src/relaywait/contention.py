"""Slotted RTS contention producing one observation.

In every minislot each of the M sources transmits an RTS with probability p.
Zero transmitters idle the minislot away, two or more collide and pay an RTS
plus a timeout, and exactly one transmitter wins: its RTS is received and the
observation ends with the winner's first-hop SNR attached.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numba
import numpy as np
from numba.extending import register_jitable

from .model import ChannelDist, SystemParams, _draw_snr

__all__ = [
    "ObservationOutcome",
    "mean_observation_duration",
    "simulate_observation",
    "sample_observation_durations",
    "transmit_count_cdf",
]

# Safety valve against parameters under which a lone winner is (nearly)
# impossible; one observation may not span more minislots than this.
MINISLOT_CAP = 1_000_000_000


@dataclass(frozen=True)
class ObservationOutcome:
    duration: float         # contention start until the winning RTS is in [s]
    winner_snr_hop1: float  # winner's source -> relay SNR (linear)
    minislots_idle: int
    collisions: int


@functools.lru_cache(maxsize=None)
def transmit_count_cdf(params: SystemParams) -> np.ndarray:
    """CDF table of the per-minislot transmitter count ~ Binomial(M, p).

    Probabilities use exact integer binomial coefficients; the final entry
    is pinned to 1.0 so a uniform draw can never fall off the table.
    """
    m, p = params.num_sources, params.tx_prob
    pmf = [math.comb(m, k) * p**k * (1.0 - p) ** (m - k) for k in range(m + 1)]
    # The running sum can overshoot 1.0 by an ulp near the tail; clip so
    # the table stays nondecreasing.
    cdf = np.minimum(np.cumsum(np.asarray(pmf, dtype=np.float64)), 1.0)
    cdf[-1] = 1.0
    cdf.setflags(write=False)
    return cdf


def mean_observation_duration(params: SystemParams) -> float:
    """Expected observation length: a renewal argument over minislot outcomes.

    Idle minislots cost sigma, collisions cost an RTS plus a timeout, and the
    single-winner minislot that ends the observation costs one RTS.
    """
    m, p = params.num_sources, params.tx_prob
    p_success = m * p * (1.0 - p) ** (m - 1)
    if p_success == 0.0:
        raise ValueError(
            "contention never resolves: single-winner probability is zero"
        )
    p_idle = (1.0 - p) ** m
    p_collision = 1.0 - p_idle - p_success
    return (
        (p_idle / p_success) * params.minislot
        + (p_collision / p_success) * (params.rts + params.timeout)
        + params.rts
    )


@register_jitable
def _observation_core(rng, cdf, minislot, rts, timeout, mean_snr, cap):
    idle = 0
    collisions = 0
    while True:
        u = rng.random()
        k = 0
        while u >= cdf[k]:
            k += 1
        if k == 1:
            duration = idle * minislot + collisions * (rts + timeout) + rts
            return duration, _draw_snr(rng, mean_snr), idle, collisions
        if k == 0:
            idle += 1
        else:
            collisions += 1
        if idle + collisions >= cap:
            raise RuntimeError("contention did not resolve within the minislot cap")


@numba.njit(cache=True)
def _durations_batch(rng, cdf, minislot, rts, timeout, mean_snr, cap, out):
    for i in range(out.size):
        duration, _, _, _ = _observation_core(
            rng, cdf, minislot, rts, timeout, mean_snr, cap
        )
        out[i] = duration


def simulate_observation(
    params: SystemParams, hop1: ChannelDist, rng
) -> ObservationOutcome:
    """Run one contention round on `rng` (anything with a U[0,1) random())."""
    duration, snr, idle, collisions = _observation_core(
        rng,
        transmit_count_cdf(params),
        params.minislot,
        params.rts,
        params.timeout,
        hop1.mean_snr,
        MINISLOT_CAP,
    )
    return ObservationOutcome(
        duration=duration,
        winner_snr_hop1=snr,
        minislots_idle=idle,
        collisions=collisions,
    )


def sample_observation_durations(
    params: SystemParams, n_observations: int, seed: int
) -> np.ndarray:
    """Durations of `n_observations` independent contention rounds."""
    if n_observations < 1:
        raise ValueError("n_observations must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    out = np.empty(n_observations, dtype=np.float64)
    _durations_batch(
        rng,
        transmit_count_cdf(params),
        params.minislot,
        params.rts,
        params.timeout,
        params.mean_snr_hop1,
        MINISLOT_CAP,
        out,
    )
    return out
