"""Core domain types: protocol timings and the fading-channel SNR law.

All durations are stored in seconds and all SNRs are linear (not dB).
Rayleigh fading on a hop makes the received SNR exponentially distributed
with the hop's mean SNR as the scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from numba.extending import register_jitable

__all__ = ["SystemParams", "ChannelDist"]

_DURATION_FIELDS = ("minislot", "rts", "cts", "timeout", "coherence")


@dataclass(frozen=True)
class SystemParams:
    """Contention parameters, protocol timings and per-hop mean SNRs."""

    num_sources: int        # M: contending source-destination pairs
    tx_prob: float          # p: per-source transmit probability per minislot
    minislot: float         # sigma: idle minislot duration [s]
    rts: float              # RTS transmission duration [s]
    cts: float              # CTS transmission duration [s]
    timeout: float          # wait after a collided RTS [s]
    coherence: float        # tau_d: coherence time, also the data slot [s]
    mean_snr_hop1: float    # rho_f: mean source -> relay SNR (linear)
    mean_snr_hop2: float    # rho_g: mean relay -> destination SNR (linear)

    def __post_init__(self) -> None:
        if self.num_sources < 1:
            raise ValueError("num_sources must be >= 1")
        if not 0.0 < self.tx_prob <= 1.0:
            raise ValueError("tx_prob must be in (0, 1]")
        for name in _DURATION_FIELDS:
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be a positive duration")
        if not (self.mean_snr_hop1 > 0.0 and self.mean_snr_hop2 > 0.0):
            raise ValueError("mean SNRs must be positive")

    def tau2(self) -> float:
        """Time cost of one second-hop probe plus the slot it commits [s]."""
        return self.rts + self.cts + self.coherence

    def hop1(self) -> "ChannelDist":
        return ChannelDist(self.mean_snr_hop1)

    def hop2(self) -> "ChannelDist":
        return ChannelDist(self.mean_snr_hop2)


@register_jitable
def _draw_snr(rng, mean_snr):
    # Inverse CDF of the exponential law; 1 - random() lies in (0, 1],
    # so the log argument can never be zero.
    return -mean_snr * math.log(1.0 - rng.random())


@dataclass(frozen=True)
class ChannelDist:
    """Exponential SNR distribution of one Rayleigh-fading hop."""

    mean_snr: float

    def __post_init__(self) -> None:
        if not self.mean_snr > 0.0:
            raise ValueError("mean_snr must be positive")

    def cdf(self, snr: float) -> float:
        if snr < 0.0:
            raise ValueError("SNR must be nonnegative")
        return 1.0 - math.exp(-snr / self.mean_snr)

    def survival(self, snr: float) -> float:
        """P[SNR >= snr], the complement of cdf."""
        if snr < 0.0:
            raise ValueError("SNR must be nonnegative")
        return math.exp(-snr / self.mean_snr)

    def sample_snr(self, rng) -> float:
        """One SNR draw from `rng`, any object with a U[0,1) `random()`."""
        return _draw_snr(rng, self.mean_snr)
