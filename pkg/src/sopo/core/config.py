"""
Configuration constants for the policy optimization laboratory.
"""

import os


class Config:
    """Configuration constants for solvers, estimators and experiments."""

    # Logging format
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
    LOG_LEVEL = os.getenv("SOPO_LOG_LEVEL", "INFO")

    # Output and parallelism
    OUTPUT_DIR = os.getenv("SOPO_OUTPUT_DIR", "runs")
    WORKERS = int(os.getenv("SOPO_WORKERS", "1"))
    FIXTURES_DIR = os.getenv("SOPO_FIXTURES_DIR", "tests/fixtures")

    VALID_ALGORITHMS = ["reinforce", "hapg", "dr-sopo", "dvr-sopo", "fdtr-sopo", "fdtr-vrsopo"]
    VALID_SCHEDULE_VARIANTS = ["dr", "dvr", "fdtr", "fdtr-vr"]
    VALID_LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]

    # Desk-scale hyper-parameters (batch 50/10, q=5, η=0.001)
    BATCH_GRAD = 50
    BATCH_HESS = 10
    EPOCH_LENGTH = 5
    ETA = 0.001
    MU_BENCHMARK = 1.0 / 500.0
    LEARNING_RATE = 0.01
    DELTA_MAX = 0.5

    # Multiplier schedule of the practical variants
    LAMBDA_INIT = 0.01
    LAMBDA_INC = 4.0
    LAMBDA_DEC = 2.0
    LAMBDA_MIN = 1e-8
    LAMBDA_BUMP_LIMIT = 60  # attempts at making Q + 2λG positive definite

    # Subspace solver
    SECULAR_MAX_ITER = 200
    SECULAR_TOL = 1e-12
    DEGENERACY_TOL = 1e-12
    NO_CONVERGENCE_RETRIES = 1

    # Truncated CG
    STEIHAUG_TOL = 1e-6

    # Exact oracles
    FD_STEP = 1e-5
    DP_BUDGET = 10_000  # n_states * n_actions
    ENUMERATION_BUDGET = 200_000  # (n_states * n_actions) ** H
    HESSIAN_DIM_LIMIT = 200
    QUADRATURE_NODES = 32

    # Summary output
    SUMMARY_GRID_POINTS = 50

    @staticmethod
    def validate_algorithm(name: str) -> str:
        """Validate and return an algorithm name.

        Raises:
            ValueError: If the name is not in VALID_ALGORITHMS
        """
        if name not in Config.VALID_ALGORITHMS:
            valid = ", ".join(Config.VALID_ALGORITHMS)
            raise ValueError(f"Invalid algorithm '{name}'. Valid algorithms: {valid}")
        return name

    @staticmethod
    def validate_schedule_variant(name: str) -> str:
        if name not in Config.VALID_SCHEDULE_VARIANTS:
            valid = ", ".join(Config.VALID_SCHEDULE_VARIANTS)
            raise ValueError(f"Invalid schedule variant '{name}'. Valid variants: {valid}")
        return name

    @staticmethod
    def validate_eta(eta: float) -> float:
        """Validate the acceptance threshold η ∈ (0, 1)."""
        if not isinstance(eta, (int, float)) or not 0 < eta < 1:
            raise ValueError(f"Invalid eta '{eta}'. Must be a number strictly between 0 and 1")
        return float(eta)

    @staticmethod
    def validate_lambda_schedule(lambda_inc: float, lambda_dec: float) -> tuple:
        """Validate σ_inc > 1 > 1/σ_dec.

        Raises:
            ValueError: If either factor is not greater than 1
        """
        if lambda_inc <= 1:
            raise ValueError(f"Invalid lambda_inc '{lambda_inc}'. Must be greater than 1")
        if lambda_dec <= 1:
            raise ValueError(f"Invalid lambda_dec '{lambda_dec}'. Must be greater than 1")
        return lambda_inc, lambda_dec

    @staticmethod
    def validate_workers(workers: int) -> int:
        if not isinstance(workers, int) or workers < 1 or workers > 256:
            raise ValueError(f"Invalid workers '{workers}'. Must be integer between 1 and 256")
        return workers

    @staticmethod
    def validate_log_level(level: str) -> str:
        level = level.upper()
        if level not in Config.VALID_LOG_LEVELS:
            raise ValueError(f"Invalid log level '{level}'. Valid levels: {', '.join(Config.VALID_LOG_LEVELS)}")
        return level
