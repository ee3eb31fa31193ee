"""
Experiment configuration and report models.
"""

import json
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, validator

from .optimizers import Algorithm
from .policy import PolicyKind


OracleScope = Literal["estimators", "solver", "mdp", "all"]


class ExperimentConfig(BaseModel):
    """One experiment: an algorithm on an MDP, repeated over seeds."""
    algorithm: Algorithm = Field("dr-sopo", description="Optimizer family")
    practical: bool = Field(True, description="Radius-free practical variant (SOPO families only)")

    mdp_fixture: Optional[str] = Field(None, description="Path to an MDP fixture file")
    mdp_seed: int = Field(7, ge=0, description="Seed of the random MDP when no fixture is given")
    n_states: int = Field(5, ge=1, description="States of the random MDP")
    n_actions: int = Field(3, ge=1, description="Actions of the random MDP")
    reward_bound: float = Field(1.0, gt=0, description="Reward bound of the random MDP")
    gamma: Optional[float] = Field(None, ge=0, lt=1, description="Discount; fixture value when unset")
    horizon: Optional[int] = Field(None, ge=1, description="Truncation horizon; fixture value when unset")

    policy: PolicyKind = Field("tabular-softmax", description="Policy family")

    batch_grad: int = Field(50, ge=1, description="Gradient batch size")
    batch_hess: int = Field(10, ge=1, description="Hessian batch size")
    batch_0: int = Field(50, ge=1, description="Epoch-start gradient batch size")
    batch_havr: int = Field(10, ge=1, description="HAVR samples per inner step")
    q: int = Field(5, ge=1, description="Epoch length")
    delta: float = Field(0.2, gt=0, description="Trust radius of the basic variants")
    delta_max: float = Field(0.5, gt=0, description="Step cap of the practical variants")
    eta: float = Field(0.001, gt=0, lt=1, description="Acceptance threshold")
    mu: float = Field(1.0, ge=0, le=1, description="Hessian estimator bias weight")
    hvp_variant: Literal["standard", "vr-uuT"] = Field("standard", description="Hessian estimator form")
    baseline: bool = Field(False, description="Subtract a fitted linear baseline in the gradient")
    learning_rate: float = Field(0.01, ge=0, description="Step size of REINFORCE and HAPG")
    lambda_init: float = Field(0.01, ge=0, description="Initial multiplier of the practical variants")

    iterations: int = Field(100, ge=0, description="Iteration budget")
    env_step_budget: int = Field(0, ge=0, description="Environment-step budget; 0 disables it")
    seed: int = Field(0, ge=0, description="Root seed")
    repeats: int = Field(1, ge=1, description="Independent seeded runs")
    workers: int = Field(1, ge=1, description="Parallel repeats")
    output: str = Field("runs", description="Output directory")
    grid_points: int = Field(50, ge=2, description="Points of the summary env-steps grid")
    exact_eval: bool = Field(True, description="Record oracle gradient norms when the MDP allows it")

    @validator('mdp_fixture')
    def validate_fixture_exists(cls, v):
        """Referenced fixture files must exist."""
        if v is not None and not Path(v).is_file():
            raise ValueError(f"MDP fixture '{v}' does not exist")
        return v


class OracleCheckResult(BaseModel):
    """Outcome of one oracle cross-check."""
    name: str = Field(..., description="Check identifier")
    scope: str = Field(..., description="Suite the check belongs to")
    passed: bool = Field(..., description="Whether observed ≤ tolerance")
    observed: float = Field(..., description="Worst observed residual")
    tolerance: float = Field(..., description="Allowed residual")
    detail: str = Field("", description="Human-readable context")
    elapsed: float = Field(0.0, ge=0, description="Seconds spent")


class OracleReport(BaseModel):
    """Machine-readable pass/fail report of an oracle suite run."""
    scope: OracleScope
    checks: List[OracleCheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[OracleCheckResult]:
        return [check for check in self.checks if not check.passed]

    def to_json(self) -> str:
        payload = self.model_dump()
        payload["passed"] = self.passed
        return json.dumps(payload, indent=2)
