"""
Experiment runner: configuration loading, seeded repeats, trace and summary output.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from models import (
    ExperimentConfig,
    PracticalConfig,
    RunResult,
    ScheduleConfig,
    TabularMDP,
    TheoryConstants,
    TRACE_COLUMNS,
)

try:
    # Try relative imports first (when used as package)
    from .core import (
        Config,
        PolicyOptimizationProblem,
        RandomStreams,
        SopoOptimizer,
        Utils,
        load_mdp,
        policy_for_mdp,
        random_mdp,
    )
    from .core.errors import ConfigError
    from .core.mdp import BENCHMARKS, fixtures_dir
except ImportError:
    # Fall back to absolute imports (when run directly)
    from core import (
        Config,
        PolicyOptimizationProblem,
        RandomStreams,
        SopoOptimizer,
        Utils,
        load_mdp,
        policy_for_mdp,
        random_mdp,
    )
    from core.errors import ConfigError
    from core.mdp import BENCHMARKS, fixtures_dir


SUMMARY_COLUMNS = ["env_steps", "mean_return_mean", "mean_return_std", "n_runs"]
EXACT_SUMMARY_COLUMNS = ["exact_return_mean", "exact_return_std"]

DEFAULT_HORIZON = 20


@dataclass
class ExperimentOutcome:
    """Files written by one experiment and the runs behind them."""
    config: ExperimentConfig
    trace_paths: List[Path] = field(default_factory=list)
    summary_path: Optional[Path] = None
    results: List[RunResult] = field(default_factory=list)


def parse_config_text(text: str, path: Optional[str] = None, known: Optional[Sequence[str]] = None
                      ) -> Tuple[Dict[str, str], Dict[str, int]]:
    """
    Parse `key = value` lines.

    Returns the raw values and the line each key came from. Blank lines and
    `#` comments are skipped; a malformed or unknown key raises ConfigError
    with its line number.
    """
    values: Dict[str, str] = {}
    lines: Dict[str, int] = {}
    known = set(known if known is not None else ExperimentConfig.model_fields)
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got '{line}'", line=number, path=path)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown key '{key}'", line=number, path=path)
        if key in values:
            raise ConfigError(f"duplicate key '{key}' (first set on line {lines[key]})", line=number, path=path)
        values[key] = value
        lines[key] = number
    return values, lines


def parse_override(item: str) -> Tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"override '{item}' must read key=value")
    key, value = (part.strip() for part in item.split("=", 1))
    if key not in ExperimentConfig.model_fields:
        raise ConfigError(f"unknown override key '{key}'")
    return key, value


def _normalize(value: str) -> Optional[str]:
    return None if value.lower() in ("", "none", "null") else value


def load_experiment_config(path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = (),
                           **flags) -> ExperimentConfig:
    """
    Build an ExperimentConfig from a file, `key=value` overrides and CLI flags
    (seed, algorithm, output), applied in that order. The output directory and
    worker count fall back to the environment defaults in Config.

    Validation failures are re-raised as ConfigError pointing at the line of
    the first offending key when it came from the file.
    """
    values: Dict[str, Optional[str]] = {}
    lines: Dict[str, int] = {}
    source = None
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}", path=source) from e
        values, lines = parse_config_text(text, source)
    for item in overrides:
        key, value = parse_override(item)
        values[key] = value
        lines.pop(key, None)
    for key, value in flags.items():
        if value is not None:
            values[key] = str(value)
            lines.pop(key, None)

    cleaned = {key: _normalize(value) for key, value in values.items()}
    cleaned = {key: value for key, value in cleaned.items() if value is not None}
    # SOPO_OUTPUT_DIR / SOPO_WORKERS fill keys nothing else set
    cleaned.setdefault("output", Config.OUTPUT_DIR)
    cleaned.setdefault("workers", str(Config.WORKERS))
    fixture = cleaned.get("mdp_fixture")
    if fixture in BENCHMARKS:
        cleaned["mdp_fixture"] = str(fixtures_dir() / BENCHMARKS[fixture])
    elif fixture is not None and source is not None and not Path(fixture).is_absolute():
        relative = Path(source).parent / fixture
        if relative.is_file():
            cleaned["mdp_fixture"] = str(relative)
    try:
        return ExperimentConfig(**cleaned)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][0]) if first["loc"] else None
        raise ConfigError(f"{key}: {first['msg']}", line=lines.get(key), path=source) from e


def load_constants(path: Optional[Union[str, Path]] = None) -> TheoryConstants:
    """Problem constants for schedule calculations; defaults when no file is given."""
    if path is None:
        return TheoryConstants()
    source = str(path)
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read constants: {e}", path=source) from e
    values, lines = parse_config_text(text, source, known=TheoryConstants.model_fields)
    try:
        return TheoryConstants(**values)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][0]) if first["loc"] else None
        raise ConfigError(f"{key}: {first['msg']}", line=lines.get(key), path=source) from e


def build_mdp(cfg: ExperimentConfig) -> Tuple[TabularMDP, int]:
    """The MDP named by the config and the horizon to run it at."""
    if cfg.mdp_fixture is not None:
        mdp = load_mdp(cfg.mdp_fixture)
    else:
        mdp = random_mdp(cfg.n_states, cfg.n_actions, gamma=cfg.gamma if cfg.gamma is not None else 0.9,
                         reward_bound=cfg.reward_bound, seed=cfg.mdp_seed, horizon=cfg.horizon)
    if cfg.gamma is not None and cfg.gamma != mdp.gamma:
        mdp = mdp.model_copy(update={"gamma": cfg.gamma})
    horizon = cfg.horizon or mdp.horizon or DEFAULT_HORIZON
    return mdp, horizon


def build_optimizer(cfg: ExperimentConfig, repeat: int, logger: Optional[logging.Logger] = None
                    ) -> Tuple[SopoOptimizer, np.ndarray]:
    """Optimizer for one repeat with streams derived from (seed, repeat)."""
    mdp, horizon = build_mdp(cfg)
    policy = policy_for_mdp(cfg.policy, mdp)
    problem = PolicyOptimizationProblem(mdp, policy, horizon, baseline="state-time" if cfg.baseline else None,
                                        exact=cfg.exact_eval)
    schedule = ScheduleConfig(
        batch_grad=cfg.batch_grad, batch_hess=cfg.batch_hess, batch_0=cfg.batch_0, batch_havr=cfg.batch_havr,
        q=cfg.q, iterations=cfg.iterations, delta=cfg.delta, mu=cfg.mu, hvp_variant=cfg.hvp_variant,
        learning_rate=cfg.learning_rate,
    )
    practical = None
    if cfg.practical and cfg.algorithm in ("dr-sopo", "dvr-sopo"):
        practical = PracticalConfig(
            delta_max=cfg.delta_max, eta=cfg.eta, q=cfg.q, batch_grad=cfg.batch_grad, batch_hess=cfg.batch_hess,
            batch_0=cfg.batch_0, batch_havr=cfg.batch_havr, mu=cfg.mu, hvp_variant=cfg.hvp_variant,
            lambda_init=cfg.lambda_init, iterations=cfg.iterations,
        )
    optimizer = SopoOptimizer(
        cfg.algorithm, problem, schedule=schedule, practical=practical,
        streams=RandomStreams(cfg.seed, (repeat,)), env_step_budget=cfg.env_step_budget,
        exact_eval=cfg.exact_eval, logger=logger,
    )
    return optimizer, np.zeros(policy.dim)


def run_repeat(cfg: ExperimentConfig, repeat: int) -> RunResult:
    """One seeded run; module-level so process pools can pickle it."""
    optimizer, theta0 = build_optimizer(cfg, repeat)
    return optimizer.run(theta0)


def trace_csv(result: RunResult) -> str:
    return ",".join(TRACE_COLUMNS) + "\n" + "".join(record.to_csv_row() + "\n" for record in result.trace)


class ExperimentRunner:
    """
    Runs an experiment's repeats and writes one trace CSV per run plus a summary.
    """

    def __init__(self, log_level: str = "INFO", logger: Optional[logging.Logger] = None):
        """
        Initialize the runner.

        Args:
            log_level: Logging level (DEBUG, INFO, WARNING, ERROR)
            logger: Optional logger; defaults to a per-class logger
        """
        self._setup_logging(log_level)
        self.logger = logger or logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    def _setup_logging(self, log_level: str):
        """Set up logging configuration."""
        level = getattr(logging, log_level.upper(), logging.INFO)

        # Only configure the root logger once so parallel workers share one setup
        if not logging.getLogger().handlers:
            formatter = logging.Formatter(Config.LOG_FORMAT, datefmt=Config.LOG_DATE_FORMAT)
            console_handler = logging.StreamHandler()
            console_handler.setLevel(level)
            console_handler.setFormatter(formatter)

            logging.basicConfig(
                level=level,
                handlers=[console_handler],
                format=Config.LOG_FORMAT
            )
        else:
            logging.getLogger().setLevel(level)

    def run_experiment(self, cfg: ExperimentConfig) -> ExperimentOutcome:
        """Run `repeats` seeded runs, then write their traces and the summary."""
        out_dir = Path(cfg.output)
        self.logger.info(f"🧪 Experiment {cfg.algorithm}: {cfg.repeats} repeat(s), seed {cfg.seed}, "
                         f"output {out_dir}")
        workers = Config.validate_workers(min(cfg.workers, cfg.repeats))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_repeat, [cfg] * cfg.repeats, range(cfg.repeats)))
        else:
            results = [run_repeat(cfg, repeat) for repeat in range(cfg.repeats)]

        out_dir.mkdir(parents=True, exist_ok=True)
        outcome = ExperimentOutcome(config=cfg, results=results)
        for repeat, result in enumerate(results):
            path = out_dir / f"trace_{cfg.algorithm}_{repeat:02d}.csv"
            path.write_text(trace_csv(result))
            outcome.trace_paths.append(path)
            self.logger.debug(f"Wrote {path}")

        exact_returns = None
        if cfg.exact_eval:
            exact_returns = self._exact_returns(cfg, results)
        outcome.summary_path = out_dir / f"summary_{cfg.algorithm}.csv"
        outcome.summary_path.write_text(summarize(results, cfg.grid_points, exact_returns))
        self.logger.info(f"✅ Wrote {len(outcome.trace_paths)} trace(s) and {outcome.summary_path}")
        return outcome

    def _exact_returns(self, cfg: ExperimentConfig, results: List[RunResult]) -> Optional[List[np.ndarray]]:
        mdp, horizon = build_mdp(cfg)
        problem = PolicyOptimizationProblem(mdp, policy_for_mdp(cfg.policy, mdp), horizon)
        returns = []
        for result in results:
            values = [problem.exact_objective(theta) for theta in result.iterates]
            if any(value is None for value in values):
                self.logger.debug("Exact objective unavailable for this MDP; summary omits exact returns")
                return None
            returns.append(-np.array(values))
        return returns


def summarize(results: List[RunResult], grid_points: int = Config.SUMMARY_GRID_POINTS,
              exact_returns: Optional[List[np.ndarray]] = None) -> str:
    """
    Mean ± std of the returns across runs on a common env-steps grid.

    The grid spans [0, the smallest final env-step count] so every run is
    interpolated inside its own trace.
    """
    finals = [result.trace[-1].env_steps for result in results if result.trace]
    top = min(finals) if finals else 0
    grid = np.linspace(0.0, top, grid_points) if top > 0 else np.zeros(1)

    curves, exact_curves = [], []
    for i, result in enumerate(results):
        steps = np.array([record.env_steps for record in result.trace], dtype=float)
        returns = np.array([record.mean_return for record in result.trace])
        curves.append(Utils.interpolate_on_grid(steps, returns, grid))
        if exact_returns is not None:
            exact_curves.append(Utils.interpolate_on_grid(steps, exact_returns[i][:len(steps)], grid))
    curves = np.array(curves)
    columns = SUMMARY_COLUMNS + (EXACT_SUMMARY_COLUMNS if exact_curves else [])
    rows = [",".join(columns)]
    for j, x in enumerate(grid):
        row = [repr(float(x)), repr(float(curves[:, j].mean())), repr(float(curves[:, j].std())), str(len(results))]
        if exact_curves:
            exact = np.array(exact_curves)[:, j]
            row += [repr(float(exact.mean())), repr(float(exact.std()))]
        rows.append(",".join(row))
    return "\n".join(rows) + "\n"


def read_summary(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Summary CSV columns as arrays."""
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    return {name: data[:, i] for i, name in enumerate(header)}
