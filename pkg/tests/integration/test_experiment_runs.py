"""
Integration tests for the experiment runner and the command-line surface.

Runs are kept tiny (bench3x2, a handful of iterations) so the whole file
finishes in seconds; the desk-scale benchmark is marked slow.
"""

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent.parent / "src"))

import cli
from models import TRACE_COLUMNS, TraceRecord
from sopo.harness import ExperimentRunner, load_experiment_config, read_summary


REPO_ROOT = Path(__file__).parent.parent.parent


def tiny_config(output: Path, *extra: str):
    overrides = ["mdp_fixture=bench3x2", "batch_grad=10", "batch_hess=4", "batch_0=10", "batch_havr=4",
                 "iterations=4", "repeats=2", f"output={output}", *extra]
    return load_experiment_config(overrides=overrides)


def read_trace(path: Path):
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    return [TraceRecord.from_csv_row(line) for line in lines[1:]]


class TestExperimentRunner:
    """End-to-end runs through ExperimentRunner."""

    @pytest.fixture
    def runner(self):
        return ExperimentRunner(log_level="WARNING")

    def test_zero_iterations_writes_initial_record(self, runner, tmp_path):
        outcome = runner.run_experiment(tiny_config(tmp_path, "iterations=0", "repeats=1"))
        records = read_trace(outcome.trace_paths[0])
        assert len(records) == 1
        assert records[0].t == 0
        assert records[0].env_steps == 0

    @pytest.mark.parametrize("algorithm,practical", [
        ("dr-sopo", "true"),
        ("dvr-sopo", "true"),
        ("dr-sopo", "false"),
        ("dvr-sopo", "false"),
        ("fdtr-sopo", "false"),
        ("fdtr-vrsopo", "false"),
        ("reinforce", "false"),
        ("hapg", "false"),
    ])
    def test_every_algorithm_runs(self, runner, tmp_path, algorithm, practical):
        outcome = runner.run_experiment(tiny_config(tmp_path, f"algorithm={algorithm}", f"practical={practical}"))
        assert len(outcome.trace_paths) == 2
        for path in outcome.trace_paths:
            records = read_trace(path)
            assert [r.t for r in records] == list(range(5))
            steps = [r.env_steps for r in records]
            assert steps == sorted(steps)
            assert all(r.exact_grad_norm is not None for r in records)
        assert outcome.summary_path.name == f"summary_{algorithm}.csv"

    def test_reruns_are_byte_identical(self, runner, tmp_path):
        first = runner.run_experiment(tiny_config(tmp_path / "a", "algorithm=dvr-sopo"))
        second = runner.run_experiment(tiny_config(tmp_path / "b", "algorithm=dvr-sopo"))
        for a, b in zip(first.trace_paths, second.trace_paths):
            assert a.read_bytes() == b.read_bytes()
        assert first.summary_path.read_bytes() == second.summary_path.read_bytes()

    def test_repeats_use_distinct_streams(self, runner, tmp_path):
        outcome = runner.run_experiment(tiny_config(tmp_path, "algorithm=reinforce"))
        first, second = (read_trace(path) for path in outcome.trace_paths)
        assert [r.mean_return for r in first] != [r.mean_return for r in second]

    def test_parallel_repeats_match_serial(self, runner, tmp_path):
        serial = runner.run_experiment(tiny_config(tmp_path / "serial"))
        parallel = runner.run_experiment(tiny_config(tmp_path / "parallel", "workers=2"))
        for a, b in zip(serial.trace_paths, parallel.trace_paths):
            assert a.read_bytes() == b.read_bytes()

    def test_env_step_budget(self, runner, tmp_path):
        outcome = runner.run_experiment(tiny_config(tmp_path, "algorithm=reinforce", "iterations=50",
                                                    "env_step_budget=90"))
        records = read_trace(outcome.trace_paths[0])
        assert records[-1].env_steps == 90
        assert records[-1].t == 3

    def test_summary_has_exact_returns(self, runner, tmp_path):
        outcome = runner.run_experiment(tiny_config(tmp_path))
        columns = read_summary(outcome.summary_path)
        assert "exact_return_mean" in columns
        assert np.all(columns["n_runs"] == 2)
        assert columns["env_steps"][0] == 0.0

    def test_baseline_runs(self, runner, tmp_path):
        outcome = runner.run_experiment(tiny_config(tmp_path, "algorithm=reinforce", "baseline=true"))
        assert len(read_trace(outcome.trace_paths[0])) == 5

    @pytest.mark.slow
    def test_desk_benchmark_improves(self, runner, tmp_path):
        """Practical DR-SOPO on bench5x3 raises the exact return within 100,000 environment steps."""
        cfg = load_experiment_config(REPO_ROOT / "configs" / "bench5x3_dr-sopo.cfg",
                                     ["repeats=2", "env_step_budget=100000"], output=str(tmp_path))
        outcome = runner.run_experiment(cfg)
        columns = read_summary(outcome.summary_path)
        assert columns["exact_return_mean"][-1] > columns["exact_return_mean"][0]


DESK_ALGORITHMS = ("reinforce", "dvr-sopo", "hapg", "dr-sopo")


def pooled_std(*stds: float) -> float:
    return float(np.sqrt(np.mean(np.square(stds))))


def first_crossing(steps: np.ndarray, values: np.ndarray, target: float) -> float:
    """Env steps at which a return curve first reaches target, linearly interpolated."""
    above = np.nonzero(values >= target)[0]
    if above.size == 0:
        return float("inf")
    k = int(above[0])
    if k == 0:
        return float(steps[0])
    s0, s1, v0, v1 = steps[k - 1], steps[k], values[k - 1], values[k]
    return float(s0 + (target - v0) / (v1 - v0) * (s1 - s0))


@pytest.mark.slow
class TestDeskBenchmark:
    """The four committed bench5x3 configs: 10 repeats, 200,000 environment steps each."""

    @pytest.fixture(scope="class")
    def summaries(self, tmp_path_factory):
        runner = ExperimentRunner(log_level="WARNING")
        out = tmp_path_factory.mktemp("desk")
        columns = {}
        for algorithm in DESK_ALGORITHMS:
            cfg = load_experiment_config(REPO_ROOT / "configs" / f"bench5x3_{algorithm}.cfg",
                                         ["repeats=10", "env_step_budget=200000"], output=str(out / algorithm))
            assert cfg.algorithm == algorithm
            columns[algorithm] = read_summary(runner.run_experiment(cfg).summary_path)
        return columns

    def test_dr_sopo_keeps_up_with_reinforce(self, summaries):
        dr, reinforce = summaries["dr-sopo"], summaries["reinforce"]
        spread = pooled_std(dr["mean_return_std"][-1], reinforce["mean_return_std"][-1])
        assert dr["mean_return_mean"][-1] >= reinforce["mean_return_mean"][-1] - spread

    def test_dvr_sopo_reaches_dr_sopo_final_return_sooner(self, summaries):
        dr, dvr = summaries["dr-sopo"], summaries["dvr-sopo"]
        crossing = first_crossing(dvr["env_steps"], dvr["mean_return_mean"], dr["mean_return_mean"][-1])
        assert crossing <= dr["env_steps"][-1]

    @pytest.mark.parametrize("algorithm", DESK_ALGORITHMS)
    def test_every_algorithm_improves_on_initial_policy(self, summaries, algorithm):
        columns = summaries[algorithm]
        assert columns["env_steps"][0] == 0.0
        assert np.all(columns["n_runs"] == 10)
        spread = pooled_std(columns["mean_return_std"][0], columns["mean_return_std"][-1])
        gain = columns["mean_return_mean"][-1] - columns["mean_return_mean"][0]
        assert gain >= 5 * spread


class TestFirstCrossing:
    """Interpolated crossing used by the desk benchmark."""

    def test_interpolates_between_grid_points(self):
        steps = np.array([0.0, 100.0, 200.0])
        assert first_crossing(steps, np.array([0.0, 1.0, 2.0]), 1.5) == pytest.approx(150.0)

    def test_never_reached(self):
        assert first_crossing(np.array([0.0, 1.0]), np.array([0.0, 0.5]), 1.0) == float("inf")

    def test_pooled_std(self):
        assert pooled_std(3.0, 4.0) == pytest.approx(np.sqrt(12.5))


class TestCommandLine:
    """Exit codes and output of the sopo command."""

    def test_schedule_prints_batches(self, tmp_path, capsys):
        constants = tmp_path / "constants.cfg"
        constants.write_text("G_g = 1\nG_H = 1\nM = 1\ndelta_J = 1\n")
        code = cli.main(["schedule", "--epsilon", "0.01", "--constants", str(constants)])
        assert code == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "1,440,000" in out
        assert "24,000" in out

    def test_epsilon_too_large_exits_with_config_code(self, tmp_path):
        constants = tmp_path / "constants.cfg"
        constants.write_text("G_g = 1\nG_H = 0.2\nM = 1\ndelta_J = 1\n")
        code = cli.main(["schedule", "--epsilon", "0.04", "--variant", "dvr", "--constants", str(constants)])
        assert code == cli.EXIT_CONFIG

    def test_bad_config_exits_with_config_code(self, tmp_path):
        config = tmp_path / "bad.cfg"
        config.write_text("algorithm = dr-sopo\nbatch_grad = many\n")
        assert cli.main(["run", "--config", str(config), "--out", str(tmp_path / "out")]) == cli.EXIT_CONFIG

    def test_run_writes_outputs(self, tmp_path, capsys):
        config = tmp_path / "quick.cfg"
        config.write_text("mdp_fixture = bench3x2\nbatch_grad = 10\nbatch_hess = 4\niterations = 3\n")
        out = tmp_path / "out"
        code = cli.main(["--log-level", "WARNING", "run", "--config", str(config), "--out", str(out),
                         "--algo", "hapg", "--seed", "5"])
        assert code == cli.EXIT_OK
        assert (out / "trace_hapg_00.csv").is_file()
        assert (out / "summary_hapg.csv").is_file()
        assert "Summary written" in capsys.readouterr().out

    def test_oracle_json_report(self, tmp_path):
        report = tmp_path / "oracle.json"
        assert cli.main(["oracle", "solver", "--json", str(report)]) == cli.EXIT_OK
        assert '"passed": true' in report.read_text()

    def test_subprocess_exit_code(self, tmp_path):
        """The script entry point propagates main()'s return code."""
        constants = tmp_path / "constants.cfg"
        constants.write_text("G_H = 0.2\n")
        result = subprocess.run(
            [sys.executable, str(REPO_ROOT / "src" / "cli.py"), "schedule", "--epsilon", "0.04",
             "--variant", "dvr", "--constants", str(constants)],
            capture_output=True, text=True, encoding="utf-8", errors="replace", timeout=120,
        )
        assert result.returncode == cli.EXIT_CONFIG
        assert "exceeds" in result.stderr
