"""
Typed records passed between the sopo modules.

Trust-region solutions, tabular MDPs and rollouts, policy specs,
estimator outputs, optimizer traces and experiment configs are all
validated on construction and re-exported here.
"""

# Trust-region models
from .trust_region import (
    TwoDimModel,
    TRSolution,
    FdtrSolution,
    FdtrTermination,
    SubspaceKktReport,
)

# MDP models
from .mdp import (
    TabularMDP,
    Trajectory,
)

# Policy models
from .policy import (
    PolicyKind,
    PolicySpec,
    PolicyParams,
)

# Estimator models
from .estimators import (
    GradEstimate,
    CostEstimate,
    HvpBatch,
    HessianVariant,
    LinearBaseline,
    TheoryConstants,
    VarianceReport,
)

# Optimizer models
from .optimizers import (
    Algorithm,
    ScheduleVariant,
    TRACE_COLUMNS,
    OptimizerState,
    ScheduleConfig,
    PracticalConfig,
    TraceRecord,
    RunResult,
)

# Experiment models
from .experiment import (
    ExperimentConfig,
    OracleScope,
    OracleCheckResult,
    OracleReport,
)

__all__ = [
    # Trust region
    "TwoDimModel",
    "TRSolution",
    "FdtrSolution",
    "FdtrTermination",
    "SubspaceKktReport",
    # MDP
    "TabularMDP",
    "Trajectory",
    # Policy
    "PolicyKind",
    "PolicySpec",
    "PolicyParams",
    # Estimators
    "GradEstimate",
    "CostEstimate",
    "HvpBatch",
    "HessianVariant",
    "LinearBaseline",
    "TheoryConstants",
    "VarianceReport",
    # Optimizers
    "Algorithm",
    "ScheduleVariant",
    "TRACE_COLUMNS",
    "OptimizerState",
    "ScheduleConfig",
    "PracticalConfig",
    "TraceRecord",
    "RunResult",
    # Experiments
    "ExperimentConfig",
    "OracleScope",
    "OracleCheckResult",
    "OracleReport",
]
