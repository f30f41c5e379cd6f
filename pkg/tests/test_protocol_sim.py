"""Cycle-level protocol simulation and the renewal throughput estimator."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from conftest import ScriptedRNG, reference_params
from relaywait import (
    StoppingPolicy,
    estimate_throughput,
    run_cycle,
    solve_policy,
)
from relaywait.contention import MINISLOT_CAP, transmit_count_cdf
from relaywait.stopping_solver import SolverDiagnostics
from relaywait import protocol_sim

# With M=18, p=0.1 the single-winner band of the transmit-count CDF is
# roughly [0.150, 0.450], so 0.3 resolves contention on the first minislot.
FIRST_SLOT_WIN = 0.3

DUMMY_DIAG = SolverDiagnostics(0.0, 0.0, 0)


def fixed_policy(threshold: float, cap: float) -> StoppingPolicy:
    return StoppingPolicy(
        lambda_star=0.3,
        rate_cap_snr=cap,
        hop1_threshold=threshold,
        residuals=DUMMY_DIAG,
    )


def uniform_for_snr(snr: float, mean: float) -> float:
    # _draw_snr inverts u -> -mean*log(1-u).
    return 1.0 - math.exp(-snr / mean)


class TestScriptedCycles:
    def test_immediate_stop_and_first_probe_delivery(self, params):
        policy = fixed_policy(threshold=0.5, cap=2.0)
        rng = ScriptedRNG(
            [
                FIRST_SLOT_WIN,
                uniform_for_snr(5.0, params.mean_snr_hop1),
                uniform_for_snr(10.0, params.mean_snr_hop2),
            ]
        )
        result = run_cycle(policy, params, rng)
        assert rng.consumed == 3
        assert result.observations == 1
        assert result.hop2_probes == 1
        assert result.stop_snr == pytest.approx(5.0, rel=1e-12)
        # The 5.0 first hop saturates at the 2.0 cap.
        assert result.delivered == pytest.approx(
            math.log2(3.0) * params.coherence, rel=1e-12
        )
        expected = (
            params.rts  # single-minislot contention round
            + params.cts
            + params.coherence
            + (params.rts + params.cts + params.coherence)
        )
        assert result.elapsed == pytest.approx(expected, rel=1e-12)

    def test_give_up_round_and_probe_retry(self, params):
        policy = fixed_policy(threshold=0.5, cap=2.0)
        rng = ScriptedRNG(
            [
                FIRST_SLOT_WIN,
                uniform_for_snr(0.2, params.mean_snr_hop1),  # below threshold
                FIRST_SLOT_WIN,
                uniform_for_snr(1.0, params.mean_snr_hop1),  # stop here
                0.0,  # probe draws SNR 0, below the 1.0 target
                uniform_for_snr(10.0, params.mean_snr_hop2),
            ]
        )
        result = run_cycle(policy, params, rng)
        assert rng.consumed == 6
        assert result.observations == 2
        assert result.hop2_probes == 2
        assert result.stop_snr == pytest.approx(1.0, rel=1e-12)
        assert result.delivered == pytest.approx(
            math.log2(2.0) * params.coherence, rel=1e-12
        )
        expected = (
            params.rts
            + params.cts  # give-up CTS after the weak observation
            + params.rts
            + params.cts
            + params.coherence
            + 2 * (params.rts + params.cts + params.coherence)
        )
        assert result.elapsed == pytest.approx(expected, rel=1e-12)


class TestCycleInvariants:
    def test_delivered_rate_matches_capped_stop_snr(self, params):
        policy = fixed_policy(threshold=0.7, cap=3.0)
        rng = np.random.Generator(np.random.Philox(key=[11, 0]))
        for _ in range(500):
            result = run_cycle(policy, params, rng)
            required = min(result.stop_snr, policy.rate_cap_snr)
            assert result.delivered == math.log2(1.0 + required) * params.coherence
            assert result.stop_snr >= policy.hop1_threshold
            assert result.observations >= 1
            assert result.hop2_probes >= 1

    def test_observation_count_is_geometric(self, params):
        # Stop probability per observation is the threshold's survival.
        policy = fixed_policy(threshold=0.7356, cap=3.0)
        rng = np.random.Generator(np.random.Philox(key=[12, 0]))
        n = 20_000
        counts = np.array([run_cycle(policy, params, rng).observations for _ in range(n)])
        stop_prob = math.exp(-policy.hop1_threshold / params.mean_snr_hop1)
        mean = 1.0 / stop_prob
        stderr = math.sqrt((1.0 - stop_prob) / stop_prob**2 / n)
        assert abs(counts.mean() - mean) < 3.0 * stderr

    def test_probe_count_is_geometric(self, params):
        # Threshold equal to the cap pins the rate target of every cycle,
        # so probe counts are geometric with the target's survival.
        policy = fixed_policy(threshold=2.0, cap=2.0)
        rng = np.random.Generator(np.random.Philox(key=[13, 0]))
        n = 8_000
        probes = np.array([run_cycle(policy, params, rng).hop2_probes for _ in range(n)])
        success = math.exp(-policy.rate_cap_snr / params.mean_snr_hop2)
        mean = 1.0 / success
        stderr = math.sqrt((1.0 - success) / success**2 / n)
        assert abs(probes.mean() - mean) < 3.0 * stderr


class TestCompiledPathMatchesPython:
    def test_cycle_outputs_identical(self, params):
        policy = fixed_policy(threshold=0.7, cap=3.0)
        cdf = transmit_count_cdf(params)
        bitgen = np.random.Philox(key=[0, 0])
        rng = np.random.Generator(bitgen)
        for index in range(50):
            protocol_sim._rekey(bitgen, 21, index)
            jit_out = protocol_sim._cycle_jit(
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
            py_rng = np.random.Generator(np.random.Philox(key=[21, index]))
            result = run_cycle(policy, params, py_rng)
            assert jit_out == (
                result.delivered,
                result.elapsed,
                result.observations,
                result.hop2_probes,
                result.stop_snr,
            )

    def test_estimate_reconstructable_from_python_cycles(self, params):
        policy = fixed_policy(threshold=0.7, cap=3.0)
        cycles, seed = 200, 6
        estimate = estimate_throughput(policy, params, cycles, seed)
        sum_y = sum_t = 0.0
        for index in range(cycles):
            rng = np.random.Generator(np.random.Philox(key=[seed, index]))
            result = run_cycle(policy, params, rng)
            sum_y += result.delivered
            sum_t += result.elapsed
        assert estimate.mean == sum_y / sum_t
        assert estimate.total_time == sum_t
        assert estimate.cycles == cycles


class TestEstimateThroughput:
    def test_deterministic_for_a_seed(self, params):
        policy = fixed_policy(threshold=0.7, cap=3.0)
        first = estimate_throughput(policy, params, 3_000, seed=7)
        second = estimate_throughput(policy, params, 3_000, seed=7)
        assert first == second
        other = estimate_throughput(policy, params, 3_000, seed=8)
        assert other.mean != first.mean

    def test_stderr_shrinks_with_cycle_count(self, params):
        policy = fixed_policy(threshold=0.7, cap=3.0)
        small = estimate_throughput(policy, params, 10_000, seed=3)
        large = estimate_throughput(policy, params, 40_000, seed=3)
        assert small.stderr > 0.0
        assert 0.35 < large.stderr / small.stderr < 0.65

    def test_matches_solved_throughput(self, params):
        policy = solve_policy(params)
        estimate = estimate_throughput(policy, params, 200_000, seed=2026)
        rel_err = abs(estimate.mean - policy.lambda_star) / policy.lambda_star
        assert rel_err < 0.01
        assert abs(estimate.mean - policy.lambda_star) < 4.0 * estimate.stderr

    def test_perturbed_thresholds_do_not_beat_the_solved_one(self, params):
        policy = solve_policy(params)
        base = estimate_throughput(policy, params, 50_000, seed=40)
        for factor in (0.5, 2.0):
            perturbed = dataclasses.replace(
                policy, hop1_threshold=factor * policy.hop1_threshold
            )
            other = estimate_throughput(perturbed, params, 50_000, seed=41)
            slack = 3.0 * math.hypot(base.stderr, other.stderr)
            assert other.mean <= base.mean + slack

    def test_input_validation(self, params):
        policy = fixed_policy(threshold=0.7, cap=3.0)
        with pytest.raises(ValueError):
            estimate_throughput(policy, params, 1, seed=0)
        with pytest.raises(ValueError):
            estimate_throughput(policy, params, 100, seed=-1)
