"""
Estimator models and the variance-bound constants.

TheoryConstants derives the gradient/Hessian variance bounds, the
truncation-gap constants and the biased-Hessian MSE bound from the
problem constants (R, G, L, γ, H). G_g and G_H may also be supplied
directly, e.g. from a constants file for schedule calculations.
"""

import math
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator, validator

from .mdp import Trajectory


HessianVariant = Literal["standard", "vr-uuT"]


class GradEstimate(BaseModel):
    """Batch-mean gradient estimate g(θ; 𝓜)."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    g: np.ndarray = Field(..., description="Mean gradient estimate")
    n_trajectories: int = Field(..., ge=1, description="Batch size |𝓜|")
    sum_sq_norm: float = Field(0.0, ge=0, description="Σ‖g(θ;τ)‖² over the batch")
    mean_cost: float = Field(0.0, description="Mean truncated return of the batch")
    env_steps: int = Field(0, ge=0, description="Environment steps spent on the batch")

    @validator('g', pre=True)
    def validate_g(cls, v):
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("Gradient estimate must be finite")
        return arr

    @property
    def sample_variance(self) -> float:
        """Unbiased estimate of E‖g(θ;τ) − ∇J‖² from the batch."""
        n = self.n_trajectories
        if n < 2:
            return 0.0
        return max(self.sum_sq_norm - n * float(self.g @ self.g), 0.0) / (n - 1)


class CostEstimate(BaseModel):
    """Mean truncated return over a batch (an estimate of J)."""
    value: float = Field(..., description="Mean truncated return")
    n_trajectories: int = Field(..., ge=0, description="Batch size")
    env_steps: int = Field(0, ge=0, description="Environment steps spent")


class HvpBatch(BaseModel):
    """Trajectories sampled at θ on which the stochastic Hessian acts."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    trajectories: List[Trajectory] = Field(..., description="Trajectories sampled at theta")
    theta: np.ndarray = Field(..., description="Parameters the batch was sampled at")
    mu: float = Field(1.0, ge=0, le=1, description="Weight of the g·∇log pᵀ term; 1 is unbiased")
    variant: HessianVariant = Field("standard", description="Estimator form")

    @validator('trajectories')
    def validate_nonempty(cls, v):
        if not v:
            raise ValueError("An HVP batch needs at least one trajectory")
        return v

    @validator('theta', pre=True)
    def as_vector(cls, v):
        return np.asarray(v, dtype=float).ravel()


class LinearBaseline(BaseModel):
    """Linear value baseline b(s, h) = φ(s, h)ᵀw fitted to discounted returns-to-go."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: np.ndarray = Field(..., description="Feature weights w")
    features: Literal["bias", "one-hot", "state-time"] = Field("state-time", description="Feature map name")
    n_states: int = Field(1, ge=1, description="Number of states of the feature map")
    horizon: int = Field(1, ge=1, description="Horizon used to scale time features")
    fitted: bool = Field(False, description="Whether weights come from a fit")
    ridge: float = Field(0.0, ge=0, description="Ridge added to the Gram matrix")

    @validator('weights', pre=True)
    def validate_weights(cls, v):
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("Baseline weights must be finite")
        return arr


class TheoryConstants(BaseModel):
    """Problem constants and the bounds derived from them."""
    R: float = Field(1.0, gt=0, description="Reward bound")
    G: float = Field(math.sqrt(2.0), gt=0, description="Score-norm bound")
    L: float = Field(0.5, ge=0, description="Score-Hessian norm bound")
    gamma: float = Field(0.9, ge=0, lt=1, description="Discount factor")
    H: int = Field(10, ge=1, description="Horizon")
    M: float = Field(1.0, gt=0, description="Hessian Lipschitz constant")
    C: float = Field(0.0, ge=0, description="Subspace approximation constant")
    delta_J: float = Field(1.0, gt=0, description="Initial suboptimality J(θ_0) − J*")
    G_g: Optional[float] = Field(None, gt=0, description="Gradient variance bound; derived when unset")
    G_H: Optional[float] = Field(None, gt=0, description="Hessian variance bound; derived when unset")

    @model_validator(mode="after")
    def derive_bounds(self):
        if self.G_g is None:
            self.G_g = self.G * self.R / (1.0 - self.gamma) ** 1.5
        if self.G_H is None:
            self.G_H = math.sqrt(self.G_H_squared_main())
        return self

    def G_H_squared_main(self) -> float:
        one_minus = 1.0 - self.gamma
        return (self.H ** 4 * self.G ** 4 * self.R ** 2 / one_minus ** 2
                + self.L ** 2 * self.R ** 2 / one_minus ** 4)

    @property
    def G_H_split(self) -> float:
        """Looser form that bounds the two Hessian terms separately (factor-2 split)."""
        one_minus = 1.0 - self.gamma
        value = (2 * self.H ** 4 * self.G ** 4 * self.R ** 2 * one_minus ** 2
                 + 4 * self.L ** 2 * self.R ** 2) / one_minus ** 4
        return math.sqrt(value)

    @property
    def G_H_prime(self) -> float:
        """Bound for the Σ γ^h r_h u_h u_hᵀ Hessian estimator."""
        one_minus = 1.0 - self.gamma
        value = (48 * self.G ** 4 * self.R ** 2 + 4 * self.L ** 2 * self.R ** 2 * one_minus ** 2) / one_minus ** 6
        return math.sqrt(value)

    @property
    def C_tilde(self) -> float:
        return self.C + 1.0 / 24.0

    @property
    def value_gap_coefficient(self) -> float:
        return self.R / (1.0 - self.gamma)

    @property
    def D(self) -> float:
        one_minus = 1.0 - self.gamma
        return self.G * self.R / one_minus * math.sqrt(1.0 / one_minus + self.H)

    @property
    def D_prime(self) -> float:
        om = 1.0 - self.gamma
        H = self.H
        quartic = 24 / om ** 4 + 24 * H / om ** 3 + 12 * H ** 2 / om ** 2 + 4 * H ** 3 / om + H ** 4
        quadratic = 2 / om ** 2 + 2 * H / om + H ** 2
        return (self.R * self.G ** 2 / om * math.sqrt(quartic)
                + self.R * self.L / om * math.sqrt(quadratic))

    def biased_mse_bound(self, mu: float) -> float:
        """MSE bound of the μ-weighted Hessian estimator."""
        om = 1.0 - self.gamma
        curvature = 2 * self.L ** 2 * self.R ** 2 / om ** 4
        score_outer = self.G ** 4 * self.H ** 4 * self.R ** 2 / om ** 2
        return curvature + (mu - 1.0) ** 2 * score_outer + 2 * mu * math.sqrt(curvature * score_outer)

    @property
    def tightest_biased_bound(self) -> float:
        om = 1.0 - self.gamma
        return 2 * math.sqrt(2.0) * self.L * self.R ** 2 * self.G ** 2 * self.H ** 2 / om ** 3


class VarianceReport(BaseModel):
    """Second moment of an estimator around its mean, against the variance-bound constant."""
    estimator: str = Field(..., description="Estimator name")
    moment: float = Field(..., ge=0, description="E‖X − E X‖² for a single trajectory")
    bound: float = Field(..., ge=0, description="Variance-bound constant squared")
    batch_size: int = Field(1, ge=1, description="Batch size n")
    batch_moment: float = Field(..., ge=0, description="Measured second moment of the n-sample mean")
    batch_sigma: Optional[float] = Field(None, description="Standard error of batch_moment when sampled")
    exact: bool = Field(True, description="True when computed by enumeration")
    sigma: Optional[float] = Field(None, description="Monte-Carlo standard error of the moment")
    spectral_moment: Optional[float] = Field(None, description="E‖X − E X‖₂² (operator norm) for Hessians")

    @property
    def within_bound(self) -> bool:
        return self.moment <= self.bound
