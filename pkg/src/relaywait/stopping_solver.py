"""Reward formulas and numeric solvers for the relay-waiting policy.

The throughput objective E[Y]/E[T] is handled through the usual
ratio-to-difference transform: at candidate rate lambda a cycle earns
Y - lambda*T, and the optimal lambda* is the unique zero of the maximal
expected transformed reward per cycle.  Everything here is closed form
except three one-dimensional root-finds (the rate cap, the stopping
threshold, lambda* itself) and one quadrature over the first-hop SNR law.

Reward values are in bits/Hz: rate [bits/s/Hz] times duration [s].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

from .contention import mean_observation_duration
from .model import SystemParams

__all__ = [
    "SolverError",
    "SolverDiagnostics",
    "StoppingPolicy",
    "RateCapResult",
    "rate_for_cap",
    "expected_v1",
    "expected_v_inf",
    "expected_v_l",
    "solve_rate_cap",
    "net_stop_reward",
    "optimality_gap",
    "solve_policy",
]

_LN2 = math.log(2.0)
_MAX_BRACKET_DOUBLINGS = 200
_MAX_BISECT_ITER = 600


class SolverError(RuntimeError):
    """A numeric solve failed to produce a usable policy."""


@dataclass(frozen=True)
class SolverDiagnostics:
    rate_cap_residual: float      # |stationarity condition| at the returned cap
    fixed_point_residual: float   # |optimality gap| at the returned lambda*
    bisection_iterations: int     # iterations of the lambda* bisection


@dataclass(frozen=True)
class StoppingPolicy:
    """Solved relay-waiting policy.

    Stop at the first observation whose winner SNR reaches hop1_threshold,
    transmit at rate log2(1 + min(winner SNR, rate_cap_snr)), then keep
    probing the second hop until that rate is achievable.
    """

    lambda_star: float      # optimal throughput [bits/s/Hz]
    rate_cap_snr: float     # SNR above which the transmission rate is capped
    hop1_threshold: float   # stop iff the winner's first-hop SNR >= this
    residuals: SolverDiagnostics


def rate_for_cap(snr: float) -> float:
    """Achievable rate at a linear SNR [bits/s/Hz]."""
    return math.log2(1.0 + snr)


def expected_v1(lam: float, required_snr: float, params: SystemParams) -> float:
    """Expected transformed reward of a single second-hop probe.

    The probe succeeds with the survival probability of `required_snr`, in
    which case the full probe-and-transmit cost tau2 buys rate*tau_d of
    traffic; a failed probe forfeits the traffic at the cost of the exchange.
    """
    survival = math.exp(-required_snr / params.mean_snr_hop2)
    rate = rate_for_cap(required_snr)
    win = rate * params.coherence - lam * params.tau2()
    lose = -lam * (params.rts + params.cts)
    return survival * win + (1.0 - survival) * lose


def expected_v_inf(lam: float, required_snr: float, params: SystemParams) -> float:
    """Expected transformed reward of probing until the rate is achievable.

    Closed form of the recursion "succeed now, or pay tau2 and face the same
    problem": the mean probe count is geometric, 1/survival.
    """
    survival = math.exp(-required_snr / params.mean_snr_hop2)
    if survival == 0.0:
        raise SolverError(
            "second-hop success probability underflowed to zero; "
            "probing would never terminate"
        )
    return rate_for_cap(required_snr) * params.coherence - lam * params.tau2() / survival


def expected_v_l(
    lam: float, required_snr: float, max_probes: int, params: SystemParams
) -> float:
    """Expected transformed reward with at most `max_probes` probes.

    Success at probe k costs k*tau2; running out of probes costs the failed
    exchanges, where only the last one is not followed by a coherence wait.
    """
    if max_probes < 1:
        raise ValueError("max_probes must be >= 1")
    failure = 1.0 - math.exp(-required_snr / params.mean_snr_hop2)
    tau2 = params.tau2()
    rate = rate_for_cap(required_snr)
    total = 0.0
    for k in range(1, max_probes + 1):
        total += failure ** (k - 1) * (1.0 - failure) * (
            rate * params.coherence - k * lam * tau2
        )
    give_up = -(max_probes - 1) * lam * tau2 - lam * (params.rts + params.cts)
    return total + failure**max_probes * give_up


def _phi(x: float, lam: float, params: SystemParams) -> float:
    # Net reward of stopping with an uncapped rate target x: the keep-probing
    # value minus the first-hop CTS and data-slot cost, Rayleigh form.
    return (
        rate_for_cap(x) * params.coherence
        - lam * params.cts
        - lam * params.coherence
        - lam * math.exp(x / params.mean_snr_hop2) * params.tau2()
    )


def _phi_prime(x: float, lam: float, params: SystemParams) -> float:
    return params.coherence / ((1.0 + x) * _LN2) - (
        lam / params.mean_snr_hop2
    ) * math.exp(x / params.mean_snr_hop2) * params.tau2()


def net_stop_reward(
    lam: float, snr_hop1: float, rate_cap: float, params: SystemParams
) -> float:
    """Net transformed reward of stopping at first-hop SNR `snr_hop1`.

    The rate target is min(snr_hop1, rate_cap), so the reward is
    nondecreasing in snr_hop1 and constant above the cap.
    """
    if snr_hop1 < 0.0:
        raise ValueError("snr_hop1 must be nonnegative")
    return _phi(min(snr_hop1, rate_cap), lam, params)


class RateCapResult(NamedTuple):
    snr: float          # maximizer of the stop reward over the rate target
    degenerate: bool    # True when the maximizer is pinned at zero
    residual: float     # |stationarity condition| at snr (0 when degenerate)
    iterations: int


def solve_rate_cap(
    lam: float, params: SystemParams, residual_tol: float = 1e-12
) -> RateCapResult:
    """Maximize the uncapped stop reward over the rate-target SNR.

    The reward is strictly concave, so its derivative has at most one sign
    change; bisection runs on the derivative after doubling out a bracket.
    When the derivative is already nonpositive at zero the maximizer is the
    boundary and the result is flagged degenerate.
    """
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    if _phi_prime(0.0, lam, params) <= 0.0:
        return RateCapResult(snr=0.0, degenerate=True, residual=0.0, iterations=0)

    hi = 1.0
    doublings = 0
    while _phi_prime(hi, lam, params) > 0.0:
        hi *= 2.0
        doublings += 1
        if doublings > _MAX_BRACKET_DOUBLINGS:
            raise SolverError("rate-cap bracket doubling did not find a sign change")

    lo = 0.0
    iterations = 0
    while True:
        mid = 0.5 * (lo + hi)
        slope = _phi_prime(mid, lam, params)
        iterations += 1
        if abs(slope) < residual_tol:
            return RateCapResult(
                snr=mid, degenerate=False, residual=abs(slope), iterations=iterations
            )
        if iterations >= _MAX_BISECT_ITER:
            raise SolverError(
                f"rate-cap bisection stalled at residual {abs(slope):.3e}"
            )
        if slope > 0.0:
            lo = mid
        else:
            hi = mid


def _bisect_root(f: Callable[[float], float], lo: float, hi: float) -> float:
    """Sign-change bisection; assumes f(lo) and f(hi) straddle zero."""
    f_lo = f(lo)
    for _ in range(_MAX_BISECT_ITER):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            return mid
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_lo > 0.0) == (f_mid > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _adaptive_simpson(
    f: Callable[[float], float], a: float, b: float, tol: float
) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_recurse(f, a, b, fa, fm, fb, whole, tol, tol, 50)


def _simpson_recurse(f, a, b, fa, fm, fb, whole, tol, floor, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    # Once an interval shrinks to float64 resolution the halved local
    # tolerance can become unmeetable even though the piece is already far
    # inside the caller's overall budget; accept it against that budget.
    if (b - a) <= 4e-15 * (abs(a) + abs(b) + 1.0) and abs(delta) <= 15.0 * floor:
        return left + right + delta / 15.0
    if depth <= 0:
        raise SolverError(
            f"quadrature did not converge; achieved tolerance {abs(delta) / 15.0:.3e}"
        )
    return _simpson_recurse(
        f, a, m, fa, flm, fm, left, 0.5 * tol, floor, depth - 1
    ) + _simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, floor, depth - 1)


def _expected_best_reward(
    lam: float,
    stop_reward: Callable[[float], float],
    cap: float,
    params: SystemParams,
    quad_tol: float,
) -> tuple[float, float]:
    """E over the first-hop SNR of max(stop_reward(min(snr, cap)), give-up).

    `stop_reward` must be nondecreasing on [0, cap]; above the cap it is
    treated as constant, which puts any indifference point inside [0, cap].
    Returns (expectation, indifference SNR); the indifference SNR is 0 when
    stopping always wins and inf when it never does.

    The expectation splits into closed forms below the indifference point
    (constant give-up reward) and above the cap (constant top reward times
    the exponential tail), leaving quadrature only on the middle segment.
    That quadrature runs over the SNR quantile u = F(r) rather than r
    itself: in r the exponential weight packs the mass into a corner of a
    potentially huge interval, where coarse Simpson samples can all miss
    it and report false convergence.
    """
    give_up = -lam * params.cts
    top = stop_reward(cap)
    if top <= give_up:
        return give_up, math.inf
    if stop_reward(0.0) >= give_up:
        threshold = 0.0
    else:
        threshold = _bisect_root(lambda r: stop_reward(r) - give_up, 0.0, cap)

    rho = params.mean_snr_hop1
    below = give_up * (1.0 - math.exp(-threshold / rho))
    tail = top * math.exp(-cap / rho)

    def along_quantiles(u: float) -> float:
        survival = 1.0 - u
        if survival <= 0.0:
            return top
        return stop_reward(min(-rho * math.log(survival), cap))

    middle = _adaptive_simpson(
        along_quantiles,
        -math.expm1(-threshold / rho),
        -math.expm1(-cap / rho),
        quad_tol,
    )
    return below + middle + tail, threshold


def _default_quad_tol(params: SystemParams) -> float:
    return 1e-10 * params.coherence


def optimality_gap(
    lam: float, params: SystemParams, quad_tol: float | None = None
) -> float:
    """Maximal expected transformed reward per observation cycle.

    Strictly decreasing in lam; its unique zero is the optimal throughput.
    When the rate cap degenerates to zero, stopping pays less than giving up
    for every first-hop SNR and the expectation collapses to the give-up
    reward.
    """
    if quad_tol is None:
        quad_tol = _default_quad_tol(params)
    tau1 = mean_observation_duration(params)
    cap = solve_rate_cap(lam, params)
    if cap.degenerate:
        return -lam * params.cts - lam * tau1
    value, _ = _expected_best_reward(
        lam, lambda r: _phi(r, lam, params), cap.snr, params, quad_tol
    )
    return value - lam * tau1


def _solve_ratio_fixed_point(
    gap: Callable[[float], float], tol: float
) -> tuple[float, int, float]:
    """Bisect the strictly decreasing `gap` to |gap| < tol.

    Returns (root, iterations, achieved residual).  The lower edge of the
    bracket is a tiny positive rate; the upper edge doubles out from 1.
    """
    lam_lo = 1e-9
    if gap(lam_lo) <= 0.0:
        raise SolverError(
            "no positive-throughput policy: transformed reward is nonpositive "
            "even at negligible rate"
        )
    lam_hi = 1.0
    doublings = 0
    while gap(lam_hi) > 0.0:
        lam_hi *= 2.0
        doublings += 1
        if doublings > _MAX_BRACKET_DOUBLINGS:
            raise SolverError("fixed-point bracket doubling did not find a sign change")

    iterations = 0
    while True:
        mid = 0.5 * (lam_lo + lam_hi)
        g = gap(mid)
        iterations += 1
        if abs(g) < tol:
            return mid, iterations, abs(g)
        if iterations >= _MAX_BISECT_ITER:
            raise SolverError(f"fixed-point bisection stalled at residual {abs(g):.3e}")
        if g > 0.0:
            lam_lo = mid
        else:
            lam_hi = mid


def solve_policy(params: SystemParams, tol: float | None = None) -> StoppingPolicy:
    """Solve the full policy: lambda*, the rate cap, and the stop threshold.

    `tol` bounds the optimality-gap residual at lambda*; the default scales
    with the coherence time so it is a relative criterion in disguise.
    """
    if tol is None:
        tol = 1e-9 * params.coherence
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    quad_tol = _default_quad_tol(params)

    lam_star, iterations, residual = _solve_ratio_fixed_point(
        lambda lam: optimality_gap(lam, params, quad_tol), tol
    )

    cap = solve_rate_cap(lam_star, params)
    if cap.degenerate:
        raise SolverError(
            "optimal policy would never transmit: rate cap collapsed to zero"
        )
    _, threshold = _expected_best_reward(
        lam_star, lambda r: _phi(r, lam_star, params), cap.snr, params, quad_tol
    )
    if not math.isfinite(threshold):
        raise SolverError(
            "optimal policy would never transmit: stopping never beats giving up"
        )
    return StoppingPolicy(
        lambda_star=lam_star,
        rate_cap_snr=cap.snr,
        hop1_threshold=threshold,
        residuals=SolverDiagnostics(
            rate_cap_residual=cap.residual,
            fixed_point_residual=residual,
            bisection_iterations=iterations,
        ),
    )
