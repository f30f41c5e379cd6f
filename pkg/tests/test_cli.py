"""Command-line interface: config handling, output formats, exit codes."""

from __future__ import annotations

import subprocess
import sys

import pytest

from conftest import REFERENCE
from relaywait import cli
from relaywait.cli import (
    CSV_HEADER,
    ConfigError,
    _build_parser,
    _parse_duration,
    _parse_float_list,
    build_config,
    main,
)


def make_config(args: list[str]) -> cli.RunConfig:
    return build_config(_build_parser().parse_args(args))


class TestParsing:
    @pytest.mark.parametrize(
        "text, seconds",
        [
            ("20", 20e-6),  # bare values are microseconds
            ("20us", 20e-6),
            ("0.8ms", 8e-4),
            ("1s", 1.0),
            ("103 us", 103e-6),
            ("  106us  ", 106e-6),
            ("0.000106s", 106e-6),
        ],
    )
    def test_durations(self, text, seconds):
        assert _parse_duration(text) == pytest.approx(seconds, rel=1e-15)

    @pytest.mark.parametrize("text", ["abc", "1.2.3ms", "ms", ""])
    def test_bad_durations(self, text):
        with pytest.raises(ConfigError):
            _parse_duration(text)

    def test_float_lists(self):
        assert _parse_float_list("2,5,10") == (2.0, 5.0, 10.0)
        assert _parse_float_list("2, 5") == (2.0, 5.0)
        with pytest.raises(ConfigError):
            _parse_float_list("a,b")
        with pytest.raises(ConfigError):
            _parse_float_list(",")


class TestBuildConfig:
    def test_defaults_match_the_reference_system(self):
        config = make_config(["solve", "--rho-g", "10"])
        assert config.params == REFERENCE
        assert config.cycles == cli.DEFAULT_CYCLES
        assert config.seed == cli.DEFAULT_SEED
        assert config.tol is None
        assert cli.DEFAULT_SWEEP == tuple(float(v) for v in range(2, 21))

    def test_config_file_with_comments_and_units(self, tmp_path):
        path = tmp_path / "system.cfg"
        path.write_text(
            "# reference timing set\n"
            "coherence = 0.8ms\n"
            "rts = 103      # bare microseconds\n"
            "cts = 106us\n"
            "minislot = 20\n"
            "timeout = 0.000106s\n"
            "\n"
            "num_sources = 18\n"
            "tx_prob = 0.1\n"
            "rho_f = 1\n"
            "rho_g = 10\n"
            "seed = 3\n",
            encoding="utf-8",
        )
        config = make_config(["solve", "--config", str(path)])
        assert config.params == REFERENCE
        assert config.sweep == (10.0,)
        assert config.seed == 3

    def test_flags_override_the_file(self, tmp_path):
        path = tmp_path / "system.cfg"
        path.write_text("rho_g = 4\ncycles = 5000\n", encoding="utf-8")
        config = make_config(
            ["sweep", "--config", str(path), "--cycles", "2000", "--seed", "9"]
        )
        assert config.sweep == (4.0,)
        assert config.cycles == 2000
        assert config.seed == 9

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "system.cfg"
        path.write_text("bandwidth = 10\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="unknown config keys"):
            make_config(["solve", "--config", str(path), "--rho-g", "10"])

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            make_config(["solve", "--config", str(tmp_path / "nope.cfg")])

    @pytest.mark.parametrize(
        "args",
        [
            ["solve", "--rho-g", "2,5"],  # solve takes exactly one value
            ["simulate", "--rho-g", "10", "--cycles", "50"],
            ["sweep", "--rho-g", "-1"],
            ["solve", "--rho-g", "10", "--seed", "-1"],
            ["solve", "--rho-g", "10", "--tol", "0"],
        ],
    )
    def test_invalid_combinations(self, args):
        with pytest.raises(ConfigError):
            make_config(args)


class TestExitCodes:
    def test_usage_errors_return_2(self, capsys):
        assert main(["solve", "--rho-g", "2,5"]) == cli.EXIT_USAGE
        assert main(["simulate", "--rho-g", "10", "--cycles", "50"]) == cli.EXIT_USAGE
        assert "error:" in capsys.readouterr().err

    def test_unparseable_flags_exit_2(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["solve", "--bogus"])
        assert excinfo.value.code == cli.EXIT_USAGE

    def test_solver_failure_returns_3(self, tmp_path, capsys):
        # Every source transmitting in every minislot never yields a winner.
        path = tmp_path / "system.cfg"
        path.write_text("tx_prob = 1\n", encoding="utf-8")
        code = main(["solve", "--config", str(path), "--rho-g", "10"])
        assert code == cli.EXIT_SOLVER
        assert "solver failure" in capsys.readouterr().err

    def test_subprocess_entry_point(self):
        result = subprocess.run(
            [sys.executable, "-m", "relaywait.cli", "solve", "--rho-g", "10,20"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == cli.EXIT_USAGE


class TestSolveAndSimulate:
    def test_solve_prints_twelve_significant_digits(self, capsys):
        assert main(["solve", "--rho-g", "10"]) == 0
        out = capsys.readouterr().out
        assert "lambda_star          = 0.337409340508 bits/s/Hz" in out
        assert "x_star" in out and "r_hat_f" in out

    def test_simulate_reports_the_cross_check(self, capsys):
        code = main(["simulate", "--rho-g", "10", "--cycles", "1000", "--seed", "1"])
        assert code == 0
        out = capsys.readouterr().out
        assert "sim_mean" in out
        assert "relative_error" in out


class TestSweep:
    def run_sweep(self, tmp_path, name="out.csv"):
        path = tmp_path / name
        code = main(
            ["sweep", "--rho-g", "2,5", "--cycles", "1000", "--seed", "3",
             "--out", str(path)]
        )
        assert code == 0
        return path

    def test_csv_shape_and_header(self, tmp_path):
        path = self.run_sweep(tmp_path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 3
        for line in lines[1:]:
            assert len(line.split(",")) == 9

    def test_values_and_formatting(self, tmp_path):
        path = self.run_sweep(tmp_path)
        rows = [line.split(",") for line in
                path.read_text(encoding="utf-8").splitlines()[1:]]
        assert [float(row[0]) for row in rows] == [2.0, 5.0]
        # Throughput grows with the second-hop SNR budget.
        assert float(rows[0][1]) < float(rows[1][1])
        for row in rows:
            # Baseline never beats the relay-waiting policy.
            assert float(row[6]) <= float(row[1])
            for field in row:
                # At most 12 significant digits: formatting is idempotent.
                assert field == format(float(field), ".12g")
        assert rows[0][1] == "0.244021760124"

    def test_reruns_are_byte_identical_with_lf_endings(self, tmp_path):
        first = self.run_sweep(tmp_path, "a.csv").read_bytes()
        second = self.run_sweep(tmp_path, "b.csv").read_bytes()
        assert first == second
        assert b"\r" not in first

    def test_stdout_when_no_output_path(self, capsys):
        code = main(["sweep", "--rho-g", "2", "--cycles", "1000", "--seed", "3"])
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith(CSV_HEADER + "\n")
        assert out.endswith("\n")


class TestVerify:
    def test_all_checks_pass(self, capsys):
        code = main(["verify", "--rho-g", "10", "--cycles", "2000", "--seed", "1"])
        assert code == 0
        out = capsys.readouterr().out
        assert out.count("ok  ") == 7
        assert "FAIL" not in out
