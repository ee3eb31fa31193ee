import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import argparse
import logging
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from models import OracleReport, ScheduleConfig
from sopo.core import Config, Utils, theory_schedule
from sopo.core.errors import ConfigError, EpsilonTooLarge, OracleFailure
from sopo.harness import ExperimentRunner, load_constants, load_experiment_config
from sopo.oracle_suite import run_oracle_suite

logger = logging.getLogger("sopo.cli")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sopo",
        description="Stochastic second-order policy optimization laboratory.",
    )
    parser.add_argument("--log-level", default=Config.LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run an experiment and write trace and summary CSVs")
    run.add_argument("--config", type=Path, help="Experiment config file (key = value lines)")
    run.add_argument("--seed", type=int, help="Root seed")
    run.add_argument("--out", help="Output directory")
    run.add_argument("--algo", choices=Config.VALID_ALGORITHMS, help="Algorithm to run")
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="Override one config key; repeatable")

    oracle = sub.add_parser("oracle", help="Run the oracle cross-checks")
    oracle.add_argument("scope", nargs="?", default="all", choices=["solver", "estimators", "mdp", "all"])
    oracle.add_argument("--json", type=Path, help="Also write the report as JSON")

    schedule = sub.add_parser("schedule", help="Print the theory-driven schedule for an accuracy ε")
    schedule.add_argument("--epsilon", type=float, required=True, help="Target accuracy ε")
    schedule.add_argument("--constants", type=Path, help="Constants file (key = value lines)")
    schedule.add_argument("--variant", default="dr", choices=Config.VALID_SCHEDULE_VARIANTS)
    schedule.add_argument("--dim", type=int, default=10, help="Parameter dimension d")
    return parser


def print_schedule(console: Console, schedule: ScheduleConfig, variant: str):
    table = Table(title=f"Schedule ({variant}, ε={schedule.epsilon:g})", show_header=True,
                  header_style="bold cyan")
    table.add_column("Parameter", style="yellow")
    table.add_column("Value", style="white", justify="right")
    rows = [
        ("|M_g| gradient batch", Utils.format_count(schedule.batch_grad)),
        ("|M_H| Hessian batch", Utils.format_count(schedule.batch_hess)),
        ("|M_0| epoch-start batch", Utils.format_count(schedule.batch_0)),
        ("|M̂_g| HAVR samples", Utils.format_count(schedule.batch_havr)),
        ("q epoch length", Utils.format_count(schedule.q)),
        ("T iterations", Utils.format_count(schedule.iterations)),
        ("Δ radius", f"{schedule.delta:.6g}"),
        ("total trajectories", f"{schedule.total_samples:.6g}"),
        ("sample complexity order", f"{schedule.total_samples_order:.6g}"),
    ]
    for name, value in rows:
        table.add_row(name, value)
    console.print(table)


def print_oracle_report(console: Console, report: OracleReport):
    table = Table(title=f"Oracle checks ({report.scope})", show_header=True, header_style="bold cyan")
    table.add_column("Status", width=4)
    table.add_column("Check", style="yellow")
    table.add_column("Scope", style="white")
    table.add_column("Observed", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Seconds", justify="right", style="blue")
    for check in report.checks:
        table.add_row("✅" if check.passed else "❌", check.name, check.scope, f"{check.observed:.3e}",
                      f"{check.tolerance:.1e}", f"{check.elapsed:.2f}")
    console.print(table)
    if report.failures:
        console.print(Panel.fit("\n".join(f"❌ {c.name}: {c.detail}" for c in report.failures),
                                title="Failures", style="red"))


def cmd_run(args, console: Console) -> int:
    cfg = load_experiment_config(args.config, args.override, seed=args.seed, algorithm=args.algo, output=args.out)
    runner = ExperimentRunner(log_level=args.log_level)
    outcome = runner.run_experiment(cfg)
    table = Table(title=f"Experiment {cfg.algorithm}", show_header=True, header_style="bold cyan")
    table.add_column("Repeat", justify="right")
    table.add_column("Iterations", justify="right")
    table.add_column("Env steps", justify="right")
    table.add_column("Final mean return", justify="right")
    table.add_column("Trace", style="blue")
    for repeat, (result, path) in enumerate(zip(outcome.results, outcome.trace_paths)):
        last = result.trace[-1]
        table.add_row(str(repeat), str(last.t), Utils.format_count(last.env_steps), f"{last.mean_return:.4f}",
                      str(path))
    console.print(table)
    console.print(f"📈 Summary written to {outcome.summary_path}")
    return EXIT_OK


def cmd_oracle(args, console: Console) -> int:
    report = run_oracle_suite(args.scope)
    print_oracle_report(console, report)
    if args.json is not None:
        args.json.parent.mkdir(parents=True, exist_ok=True)
        args.json.write_text(report.to_json())
    if not report.passed:
        raise OracleFailure(f"{len(report.failures)} of {len(report.checks)} oracle checks failed")
    console.print(f"🎉 All {len(report.checks)} oracle checks passed", style="green")
    return EXIT_OK


def cmd_schedule(args, console: Console) -> int:
    constants = load_constants(args.constants)
    schedule = theory_schedule(constants, args.epsilon, args.dim, args.variant)
    print_schedule(console, schedule, args.variant)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.INFO), format=Config.LOG_FORMAT,
                        datefmt=Config.LOG_DATE_FORMAT)
    console = Console()
    commands = {"run": cmd_run, "oracle": cmd_oracle, "schedule": cmd_schedule}
    try:
        return commands[args.command](args, console)
    except (ConfigError, EpsilonTooLarge, ValidationError, ValueError) as e:
        logger.error(f"❌ {e}")
        return EXIT_CONFIG
    except OracleFailure as e:
        logger.error(f"❌ {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
