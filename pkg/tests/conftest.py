"""Shared fixtures: the reference parameter set and a scripted RNG."""

from __future__ import annotations

import dataclasses

import pytest

from relaywait import SystemParams

# Reference timing set used throughout the tests: 18 sources at p = 0.1,
# 20 us minislots, 103 us RTS, 106 us CTS and timeout, 0.8 ms coherence,
# unit mean SNR on the first hop.
REFERENCE = SystemParams(
    num_sources=18,
    tx_prob=0.1,
    minislot=20e-6,
    rts=103e-6,
    cts=106e-6,
    timeout=106e-6,
    coherence=800e-6,
    mean_snr_hop1=1.0,
    mean_snr_hop2=10.0,
)


def reference_params(rho_g: float = 10.0) -> SystemParams:
    return dataclasses.replace(REFERENCE, mean_snr_hop2=rho_g)


@pytest.fixture
def params() -> SystemParams:
    return REFERENCE


class ScriptedRNG:
    """Plays back a fixed list of U[0,1) draws; raises when exhausted."""

    def __init__(self, values):
        self._values = list(values)
        self._index = 0

    def random(self) -> float:
        if self._index >= len(self._values):
            raise IndexError("scripted RNG exhausted")
        value = self._values[self._index]
        self._index += 1
        return value

    @property
    def consumed(self) -> int:
        return self._index
