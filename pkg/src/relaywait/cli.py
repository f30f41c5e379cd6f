"""Command-line front end: solve policies, run simulations, emit CSV sweeps.

Subcommands:
    solve      print the solved policy for one second-hop mean SNR
    simulate   solve, then cross-check with the Monte Carlo simulator
    sweep      CSV table over a list of second-hop mean SNRs, both policies
    verify     run the internal consistency suite; nonzero exit on failure

Configuration comes from built-in defaults, overridden by an optional
`key = value` config file, overridden by command-line flags.  Durations are
read in microseconds; a `us`, `ms` or `s` suffix overrides that.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation

import numpy as np

from .baseline import (
    estimate_probe_once_throughput,
    probe_once_stop_reward,
    solve_probe_once_policy,
)
from .contention import mean_observation_duration
from .model import ChannelDist, SystemParams
from .protocol_sim import estimate_throughput
from .stopping_solver import (
    SolverError,
    expected_v1,
    expected_v_inf,
    expected_v_l,
    net_stop_reward,
    solve_policy,
    solve_rate_cap,
)

__all__ = ["main", "RunConfig", "DEFAULTS", "DEFAULT_SWEEP", "CSV_HEADER"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4

DEFAULTS = {
    "num_sources": 18,
    "tx_prob": 0.1,
    "minislot": 20e-6,
    "rts": 103e-6,
    "cts": 106e-6,
    "timeout": 106e-6,
    "coherence": 800e-6,
    "rho_f": 1.0,
}
DEFAULT_SWEEP = tuple(float(v) for v in range(2, 21))
DEFAULT_CYCLES = 100_000
DEFAULT_SEED = 1
MIN_CYCLES = 1000

CSV_HEADER = (
    "rho_g,lambda_star,x_star,r_hat_f,sim_mean,sim_stderr,"
    "baseline_lambda_star,baseline_sim_mean,baseline_sim_stderr"
)

_DURATION_KEYS = ("minislot", "rts", "cts", "timeout", "coherence")
_UNIT_SCALE = {"us": Decimal("1e-6"), "ms": Decimal("1e-3"), "s": Decimal(1)}


class ConfigError(ValueError):
    """Invalid configuration file or flag value."""


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams          # mean_snr_hop2 holds the first sweep value
    sweep: tuple[float, ...]
    cycles: int
    seed: int
    tol: float | None
    out: str | None
    mode: str


def _fmt(value: float) -> str:
    return format(value, ".12g")


def _parse_duration(text: str) -> float:
    """A duration in seconds; bare numbers are microseconds.

    Scaling happens in decimal so that `20` comes out as the same float
    as the literal 20e-6, not as 20 * 1e-6.
    """
    raw = text.strip()
    number, scale = raw, _UNIT_SCALE["us"]
    for suffix in ("us", "ms", "s"):  # longest first so "ms" is not read as "s"
        if raw.endswith(suffix):
            number, scale = raw[: -len(suffix)].strip(), _UNIT_SCALE[suffix]
            break
    try:
        value = float(Decimal(number) * scale)
    except (InvalidOperation, ValueError) as exc:
        raise ConfigError(f"bad duration value: {text!r}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"bad duration value: {text!r}")
    return value


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"bad number list: {text!r}") from exc
    if not values:
        raise ConfigError(f"empty number list: {text!r}")
    return values


def load_config_file(path: str) -> dict[str, str]:
    """Read `key = value` lines; '#' starts a comment, blank lines ignored."""
    raw: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                stripped = line.split("#", 1)[0].strip()
                if not stripped:
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, value = stripped.split("=", 1)
                raw[key.strip().lower()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return raw


def build_config(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}

    known = set(DEFAULTS) | {"rho_g", "cycles", "seed", "tol", "out"}
    unknown = set(file_values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    def pick(key: str, flag_value, parser):
        if flag_value is not None:
            return flag_value
        if key in file_values:
            return parser(file_values[key])
        return None

    try:
        fields = dict(DEFAULTS)
        for key in _DURATION_KEYS:
            value = pick(key, None, _parse_duration)
            if value is not None:
                fields[key] = value
        for key, parser in (("num_sources", int), ("tx_prob", float), ("rho_f", float)):
            value = pick(key, None, parser)
            if value is not None:
                fields[key] = value

        sweep = pick("rho_g", args.rho_g and _parse_float_list(args.rho_g), _parse_float_list)
        if sweep is None:
            sweep = DEFAULT_SWEEP
        cycles = pick("cycles", args.cycles, int)
        if cycles is None:
            cycles = DEFAULT_CYCLES
        seed = pick("seed", args.seed, int)
        if seed is None:
            seed = DEFAULT_SEED
        tol = pick("tol", args.tol, float)
        out = pick("out", args.out, str)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    if any(v <= 0.0 for v in sweep):
        raise ConfigError("rho_g values must be positive")
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    if tol is not None and tol <= 0.0:
        raise ConfigError("tol must be positive")
    if args.mode in ("simulate", "sweep") and cycles < MIN_CYCLES:
        raise ConfigError(f"cycles must be >= {MIN_CYCLES} for {args.mode}")
    if args.mode in ("solve", "simulate") and len(sweep) != 1:
        raise ConfigError(f"{args.mode} needs exactly one rho_g value")

    try:
        params = SystemParams(
            num_sources=fields["num_sources"],
            tx_prob=fields["tx_prob"],
            minislot=fields["minislot"],
            rts=fields["rts"],
            cts=fields["cts"],
            timeout=fields["timeout"],
            coherence=fields["coherence"],
            mean_snr_hop1=fields["rho_f"],
            mean_snr_hop2=sweep[0],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    return RunConfig(
        params=params,
        sweep=sweep,
        cycles=cycles,
        seed=seed,
        tol=tol,
        out=out,
        mode=args.mode,
    )


def _print_policy(policy, rho_g: float) -> None:
    print(f"rho_g                = {_fmt(rho_g)}")
    print(f"lambda_star          = {_fmt(policy.lambda_star)} bits/s/Hz")
    print(f"x_star               = {_fmt(policy.rate_cap_snr)}")
    print(f"r_hat_f              = {_fmt(policy.hop1_threshold)}")
    print(f"rate_cap_residual    = {_fmt(policy.residuals.rate_cap_residual)}")
    print(f"fixed_point_residual = {_fmt(policy.residuals.fixed_point_residual)}")
    print(f"bisection_iterations = {policy.residuals.bisection_iterations}")


def _cmd_solve(config: RunConfig) -> int:
    policy = solve_policy(config.params, config.tol)
    _print_policy(policy, config.params.mean_snr_hop2)
    return EXIT_OK


def _cmd_simulate(config: RunConfig) -> int:
    policy = solve_policy(config.params, config.tol)
    _print_policy(policy, config.params.mean_snr_hop2)
    estimate = estimate_throughput(policy, config.params, config.cycles, config.seed)
    rel_err = abs(estimate.mean - policy.lambda_star) / policy.lambda_star
    print(f"sim_mean             = {_fmt(estimate.mean)} bits/s/Hz")
    print(f"sim_stderr           = {_fmt(estimate.stderr)}")
    print(f"cycles               = {estimate.cycles}")
    print(f"relative_error       = {_fmt(rel_err)}")
    return EXIT_OK


def _cmd_sweep(config: RunConfig) -> int:
    lines = [CSV_HEADER]
    for rho_g in config.sweep:
        params = replace(config.params, mean_snr_hop2=rho_g)
        policy = solve_policy(params, config.tol)
        estimate = estimate_throughput(policy, params, config.cycles, config.seed)
        base_policy = solve_probe_once_policy(params, config.tol)
        base_estimate = estimate_probe_once_throughput(
            base_policy, params, config.cycles, config.seed
        )
        lines.append(
            ",".join(
                _fmt(value)
                for value in (
                    rho_g,
                    policy.lambda_star,
                    policy.rate_cap_snr,
                    policy.hop1_threshold,
                    estimate.mean,
                    estimate.stderr,
                    base_policy.lambda_star,
                    base_estimate.mean,
                    base_estimate.stderr,
                )
            )
        )
    text = "\n".join(lines) + "\n"
    if config.out is None:
        sys.stdout.write(text)
    else:
        with open(config.out, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        print(f"wrote {len(config.sweep)} rows to {config.out}", file=sys.stderr)
    return EXIT_OK


def _verify_checks(config: RunConfig):
    """Yield (name, ok, detail) tuples for the consistency suite."""
    params = config.params
    tau_d = params.coherence
    hop2 = ChannelDist(params.mean_snr_hop2)

    # Closed-form identities relating the single-probe, l-probe and
    # keep-probing rewards.
    lam_grid = [0.05, 0.2, 0.5, 1.0, 3.0]
    snr_grid = [0.1, 0.5, 1.0, 3.0, 8.0]
    worst = 0.0
    for lam in lam_grid:
        for snr in snr_grid:
            failure = hop2.cdf(snr)
            v1 = expected_v1(lam, snr, params)
            v_inf = expected_v_inf(lam, snr, params)
            worst = max(worst, abs((v_inf - v1) - failure * (v_inf - lam * tau_d)))
    yield "probe recursion identity", worst < 1e-12, f"max |delta| = {worst:.3e} (tol 1e-12)"

    worst = 0.0
    for lam in lam_grid:
        for snr in snr_grid:
            failure = hop2.cdf(snr)
            v_inf = expected_v_inf(lam, snr, params)
            for probes in (1, 2, 5, 20):
                v_l = expected_v_l(lam, snr, probes, params)
                worst = max(
                    worst, abs((v_inf - v_l) - failure**probes * (v_inf - lam * tau_d))
                )
    yield "finite-horizon truncation identity", worst < 1e-12, (
        f"max |delta| = {worst:.3e} (tol 1e-12)"
    )

    worst = 0.0
    for lam in (0.05, 0.2, 0.5, 1.0, 2.0):
        cap = solve_rate_cap(lam, params)
        if not cap.degenerate:
            worst = max(worst, cap.residual)
    yield "rate-cap stationarity residual", worst < 1e-10, (
        f"max residual = {worst:.3e} (tol 1e-10)"
    )

    policy = solve_policy(params, config.tol)
    tol = config.tol if config.tol is not None else 1e-9 * tau_d
    residual = policy.residuals.fixed_point_residual
    yield "fixed-point residual", residual < tol, (
        f"residual = {residual:.3e} (tol {tol:.3e})"
    )

    rng = np.random.Generator(np.random.Philox(key=[config.seed, 0]))
    hop1 = ChannelDist(params.mean_snr_hop1)
    disagreements = 0
    for _ in range(10_000):
        snr = hop1.sample_snr(rng)
        by_reward = (
            net_stop_reward(policy.lambda_star, snr, policy.rate_cap_snr, params)
            >= -policy.lambda_star * params.cts
        )
        by_threshold = snr >= policy.hop1_threshold
        disagreements += by_reward != by_threshold
    yield "threshold equivalence", disagreements == 0, (
        f"{disagreements} disagreements out of 10000 draws"
    )

    estimate = estimate_throughput(policy, params, config.cycles, config.seed)
    rel_err = abs(estimate.mean - policy.lambda_star) / policy.lambda_star
    bound = max(0.01, 3.0 * estimate.stderr / policy.lambda_star)
    yield "renewal-reward agreement", rel_err <= bound, (
        f"relative error = {rel_err:.3e} over {config.cycles} cycles "
        f"(bound {bound:.3e})"
    )

    base = solve_probe_once_policy(params, config.tol)
    ok = base.lambda_star <= policy.lambda_star * (1.0 + 1e-12)
    yield "probe-once weak dominance", ok, (
        f"baseline {base.lambda_star:.9g} vs relay-waiting {policy.lambda_star:.9g}"
    )


def _cmd_verify(config: RunConfig) -> int:
    failures = 0
    for name, ok, detail in _verify_checks(config):
        status = "ok  " if ok else "FAIL"
        print(f"{status} {name}: {detail}")
        failures += not ok
    if failures:
        print(f"{failures} check(s) failed", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


_COMMANDS = {
    "solve": _cmd_solve,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "verify": _cmd_verify,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a key = value config file")
    common.add_argument(
        "--rho-g",
        dest="rho_g",
        help="second-hop mean SNR value or comma-separated list",
    )
    common.add_argument("--cycles", type=int, help="Monte Carlo cycles per estimate")
    common.add_argument("--seed", type=int, help="base seed for per-cycle streams")
    common.add_argument("--tol", type=float, help="fixed-point residual tolerance")
    common.add_argument("--out", help="output CSV path (sweep); default stdout")

    parser = argparse.ArgumentParser(
        prog="relaywait",
        description="Optimal relay-waiting channel-access policy: "
        "solver, protocol simulator, probe-once baseline.",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    sub.add_parser("solve", parents=[common], help="solve one policy")
    sub.add_parser("simulate", parents=[common], help="solve and cross-check by simulation")
    sub.add_parser("sweep", parents=[common], help="CSV sweep over rho_g values")
    sub.add_parser("verify", parents=[common], help="run the consistency suite")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    try:
        config = build_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return _COMMANDS[config.mode](config)
    except (SolverError, ValueError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
