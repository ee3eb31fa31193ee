"""
Optimizer state, schedules and trace records.
"""

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, validator


Algorithm = Literal["reinforce", "hapg", "dr-sopo", "dvr-sopo", "fdtr-sopo", "fdtr-vrsopo"]
ScheduleVariant = Literal["dr", "dvr", "fdtr", "fdtr-vr"]

TRACE_COLUMNS = [
    "t", "env_steps", "mean_return", "grad_norm", "exact_grad_norm",
    "lambda", "rho", "accepted", "min_eig",
]


def _format_float(value: Optional[float]) -> str:
    if value is None:
        return ""
    return repr(float(value))


class OptimizerState(BaseModel):
    """Loop state of every optimizer."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    theta: np.ndarray = Field(..., description="Current iterate θ_t")
    d_prev: np.ndarray = Field(..., description="Last accepted step d_t = θ_t − θ_{t−1}")
    last_move: np.ndarray = Field(..., description="θ_t − θ_{t−1}; zero after a rejection")
    g_est: np.ndarray = Field(..., description="Running gradient estimate g_t")
    t: int = Field(0, ge=0, description="Iteration counter")
    epoch_pos: int = Field(0, ge=0, description="t mod q")
    lam: float = Field(0.0, ge=0, description="Current multiplier (practical variants)")
    delta: float = Field(0.0, ge=0, description="Current radius (basic variants)")
    cumulative_env_steps: int = Field(0, ge=0, description="Environment steps spent so far")

    @validator('theta', 'd_prev', 'last_move', 'g_est', pre=True)
    def as_vector(cls, v):
        arr = np.asarray(v, dtype=float).ravel()
        if not np.all(np.isfinite(arr)):
            raise ValueError("Optimizer state vectors must be finite")
        return arr

    @classmethod
    def initial(cls, theta: np.ndarray, lam: float = 0.0, delta: float = 0.0) -> "OptimizerState":
        theta = np.asarray(theta, dtype=float).ravel().copy()
        zeros = np.zeros_like(theta)
        return cls(theta=theta, d_prev=zeros, last_move=zeros.copy(), g_est=zeros.copy(), lam=lam, delta=delta)

    def to_checkpoint(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "d_prev": self.d_prev.tolist(),
            "last_move": self.last_move.tolist(),
            "g_est": self.g_est.tolist(),
            "t": self.t,
            "epoch_pos": self.epoch_pos,
            "lam": self.lam,
            "delta": self.delta,
            "cumulative_env_steps": self.cumulative_env_steps,
        }

    @classmethod
    def from_checkpoint(cls, data: dict) -> "OptimizerState":
        return cls(**data)


class ScheduleConfig(BaseModel):
    """Batch sizes, epoch length, budget and radius of the basic variants."""
    epsilon: Optional[float] = Field(None, gt=0, description="Target accuracy ε")
    batch_grad: int = Field(50, ge=1, description="|𝓜_g|")
    batch_hess: int = Field(10, ge=1, description="|𝓜_H|")
    batch_0: int = Field(50, ge=1, description="|𝓜_0|, fresh gradient batch at epoch start")
    batch_havr: int = Field(10, ge=1, description="|𝓜̂_g|, HAVR samples per inner step")
    q: int = Field(5, ge=1, description="Epoch length")
    iterations: int = Field(100, ge=0, description="Iteration budget T")
    delta: float = Field(0.2, gt=0, description="Trust radius Δ")
    mu: float = Field(1.0, ge=0, le=1, description="Hessian estimator bias weight")
    hvp_variant: Literal["standard", "vr-uuT"] = Field("standard", description="Hessian estimator form")
    steihaug_tol: float = Field(1e-6, gt=0, description="Relative CG tolerance for the full-dimension solve")
    learning_rate: float = Field(0.01, ge=0, description="Normalized step size of the baselines")
    total_samples: Optional[float] = Field(None, description="Total trajectories over the run")
    total_samples_order: Optional[float] = Field(None, description="Leading-order sample complexity expression")


class PracticalConfig(BaseModel):
    """Settings of the radius-free practical variants."""
    delta_max: float = Field(0.5, gt=0, description="Cap on the Euclidean norm of α")
    eta: float = Field(0.001, gt=0, lt=1, description="Acceptance threshold η")
    q: int = Field(5, ge=1, description="Epoch length")
    batch_grad: int = Field(50, ge=1, description="Gradient batch size")
    batch_hess: int = Field(10, ge=1, description="Hessian batch size")
    batch_0: int = Field(50, ge=1, description="Fresh gradient batch at epoch start")
    batch_havr: int = Field(10, ge=1, description="HAVR samples per inner step")
    mu: float = Field(1.0, ge=0, le=1, description="Hessian estimator bias weight")
    hvp_variant: Literal["standard", "vr-uuT"] = Field("standard", description="Hessian estimator form")
    lambda_init: float = Field(0.01, ge=0, description="Initial multiplier")
    lambda_inc: float = Field(4.0, gt=1, description="σ_inc, growth on rejection")
    lambda_dec: float = Field(2.0, gt=1, description="σ_dec, shrink on acceptance")
    lambda_min: float = Field(1e-8, gt=0, description="Floor of the multiplier after acceptance")
    iterations: int = Field(100, ge=0, description="Iteration budget T")


class TraceRecord(BaseModel):
    """One row of a run trace."""
    t: int = Field(..., ge=0)
    env_steps: int = Field(..., ge=0)
    mean_return: float = Field(..., description="Negated mean cost of the batch drawn at θ_t")
    grad_norm: float = Field(..., ge=0)
    exact_grad_norm: Optional[float] = Field(None, description="Oracle ‖∇J(θ_t)‖ when available")
    lam: Optional[float] = Field(None, description="Multiplier used by the step")
    rho: Optional[float] = Field(None, description="Acceptance ratio of practical variants")
    accepted: Optional[bool] = Field(None)
    min_eig: Optional[float] = Field(None, description="Smallest eigenvalue of the Hessian on span{g, d}")

    def to_csv_row(self) -> str:
        accepted = "" if self.accepted is None else str(int(self.accepted))
        return ",".join([
            str(self.t),
            str(self.env_steps),
            _format_float(self.mean_return),
            _format_float(self.grad_norm),
            _format_float(self.exact_grad_norm),
            _format_float(self.lam),
            _format_float(self.rho),
            accepted,
            _format_float(self.min_eig),
        ])

    @classmethod
    def from_csv_row(cls, row: str) -> "TraceRecord":
        fields = row.strip().split(",")
        if len(fields) != len(TRACE_COLUMNS):
            raise ValueError(f"Trace row has {len(fields)} fields, expected {len(TRACE_COLUMNS)}")

        def opt(value: str) -> Optional[float]:
            return float(value) if value else None

        return cls(
            t=int(fields[0]),
            env_steps=int(fields[1]),
            mean_return=float(fields[2]),
            grad_norm=float(fields[3]),
            exact_grad_norm=opt(fields[4]),
            lam=opt(fields[5]),
            rho=opt(fields[6]),
            accepted=None if not fields[7] else bool(int(fields[7])),
            min_eig=opt(fields[8]),
        )


class RunResult(BaseModel):
    """Outcome of one optimizer run."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    algorithm: Algorithm
    trace: list[TraceRecord] = Field(default_factory=list)
    final_state: OptimizerState
    sampled_theta: np.ndarray = Field(..., description="Iterate picked uniformly from the trace")
    iterates: list = Field(default_factory=list, description="θ after each trace record; iterates[0] is θ_0")
