"""
Trust-region subproblem models.

These models carry the reduced quadratic model handed to the subspace
solver, and the solutions returned by the subspace and full-dimension
(truncated CG) solvers.
"""

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, validator


FdtrTermination = Literal["converged", "boundary", "negative_curvature", "zero_gradient", "max_iter"]


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"Expected a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("Vector entries must be finite")
    return arr


def _as_square(v) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(v, dtype=float))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("Matrix entries must be finite")
    return arr


class TwoDimModel(BaseModel):
    """
    Reduced quadratic model m(α) = cᵀα + ½αᵀQα subject to ‖α‖_G ≤ Δ.

    The subspace is spanned by (−g, d_prev); the 1D fallback uses a 1×1
    model along −g. Q and G are symmetrized on construction.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    Q: np.ndarray = Field(..., description="Reduced curvature matrix (k×k)")
    c: np.ndarray = Field(..., description="Reduced gradient (k-vector)")
    G: np.ndarray = Field(..., description="Step metric, Gram matrix of the basis (k×k)")
    delta: float = Field(..., gt=0, description="Trust radius in the G-norm")

    @validator('Q', 'G', pre=True)
    def symmetrize(cls, v):
        """Coerce to a finite square matrix and symmetrize."""
        arr = _as_square(v)
        return 0.5 * (arr + arr.T)

    @validator('c', pre=True)
    def validate_c(cls, v):
        """Ensure the reduced gradient is a finite vector."""
        return _as_vector(np.atleast_1d(v))

    @validator('c')
    def validate_dimensions(cls, v, values):
        """Ensure Q, c and G agree on the subspace dimension."""
        q = values.get('Q')
        if q is not None and q.shape[0] != v.shape[0]:
            raise ValueError(f"Q is {q.shape} but c has length {v.shape[0]}")
        return v

    @validator('delta')
    def validate_metric_shape(cls, v, values):
        g = values.get('G')
        c = values.get('c')
        if g is not None and c is not None and g.shape[0] != c.shape[0]:
            raise ValueError(f"G is {g.shape} but c has length {c.shape[0]}")
        return v

    @property
    def dim(self) -> int:
        return int(self.c.shape[0])

    def value(self, alpha: np.ndarray) -> float:
        """Model value m(α) relative to m(0) = 0."""
        alpha = np.asarray(alpha, dtype=float)
        return float(self.c @ alpha + 0.5 * alpha @ self.Q @ alpha)

    def metric_norm(self, alpha: np.ndarray) -> float:
        alpha = np.asarray(alpha, dtype=float)
        return float(np.sqrt(max(alpha @ self.G @ alpha, 0.0)))


class TRSolution(BaseModel):
    """Solution of one subspace trust-region solve."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    alpha: np.ndarray = Field(..., description="Coefficients of −g and d_prev")
    lam: float = Field(..., ge=0, description="Lagrange multiplier λ")
    predicted_reduction: float = Field(..., description="m(0) − m(α)")
    boundary: bool = Field(False, description="Whether the radius constraint is active")
    hard_case: bool = Field(False, description="Whether the hard-case eigenvector fill was used")
    iterations: int = Field(0, ge=0, description="Root-finder iterations")
    min_pencil_eig: Optional[float] = Field(None, description="Smallest generalized eigenvalue of (Q, G)")


class FdtrSolution(BaseModel):
    """Result of the matrix-free truncated CG solve over the full parameter space."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    d: np.ndarray = Field(..., description="Step in parameter space")
    boundary_hit: bool = Field(False, description="Whether CG stopped on the trust-region boundary")
    lambda_hat: float = Field(0.0, ge=0, description="Estimated multiplier (diagnostic only)")
    cg_iterations: int = Field(0, ge=0, description="Number of CG iterations")
    termination: FdtrTermination = Field("converged", description="Why CG stopped")
    model_value: float = Field(0.0, description="gᵀd + ½dᵀHd at the returned step")
    cauchy_value: float = Field(0.0, description="Model value at the Cauchy point")

    @validator('lambda_hat')
    def interior_has_no_multiplier(cls, v, values):
        if not values.get('boundary_hit', False) and v != 0.0:
            raise ValueError("Interior solutions must carry lambda_hat = 0")
        return v


class SubspaceKktReport(BaseModel):
    """Residuals of the projected full-scale KKT system for a lifted step."""
    stationarity: float = Field(..., ge=0, description="‖Vᵀ[(H̃+λI)d + g]‖")
    feasibility: float = Field(..., ge=0, description="max(0, ‖d‖ − Δ)")
    complementarity: float = Field(..., ge=0, description="|λ(Δ − ‖d‖)|")
    min_subspace_eig: Optional[float] = Field(None, description="Smallest eigenvalue of VᵀHV")
    reduction_gap: Optional[float] = Field(None, description="m̃(d) − m̃(0) + ½λ‖d‖²")
    rank: int = Field(..., ge=0, description="Dimension of span{g, d_prev}")

    def max_residual(self) -> float:
        return max(self.stationarity, self.feasibility, self.complementarity)
