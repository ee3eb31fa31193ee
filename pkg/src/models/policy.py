"""
Policy specification and parameter models.

Parameter layouts are fixed:
- tabular-softmax: θ[s * A + a] is the logit of action a in state s.
- linear-gaussian: θ = [W (k×m, row-major), log_std (m)], mean action ΦᵀW.
"""

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, validator


PolicyKind = Literal["tabular-softmax", "linear-gaussian"]


class PolicySpec(BaseModel):
    """Shape of a parametric policy over a tabular state space."""
    kind: PolicyKind = Field("tabular-softmax", description="Policy family")
    n_states: int = Field(..., ge=1, description="Number of states")
    n_actions: int = Field(..., ge=1, description="Number of discrete actions of the MDP")
    action_dim: int = Field(1, ge=1, description="Action dimension m (linear-gaussian only)")
    feature_dim: Optional[int] = Field(None, ge=1, description="Feature dimension k; one-hot states when unset")

    @validator('feature_dim', always=True)
    def default_features(cls, v, values):
        """Default linear-gaussian features are state one-hots."""
        if v is None:
            return values.get('n_states')
        return v

    @property
    def dim(self) -> int:
        """Parameter dimension d."""
        if self.kind == "tabular-softmax":
            return self.n_states * self.n_actions
        return self.feature_dim * self.action_dim + self.action_dim


class PolicyParams(BaseModel):
    """Flat parameter vector θ, serialized as a `kind d` header plus one value per line."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: PolicyKind = Field(..., description="Policy family the vector belongs to")
    theta: np.ndarray = Field(..., description="Parameter vector θ ∈ ℝ^d")

    @validator('theta', pre=True)
    def validate_theta(cls, v):
        """Ensure θ is a finite flat vector."""
        arr = np.asarray(v, dtype=float).ravel()
        if not np.all(np.isfinite(arr)):
            raise ValueError("Policy parameters must be finite")
        return arr

    @property
    def dim(self) -> int:
        return int(self.theta.shape[0])

    def to_text(self) -> str:
        lines = [f"{self.kind} {self.dim}"]
        lines.extend(repr(float(x)) for x in self.theta)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PolicyParams":
        rows = [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
        if not rows:
            raise ValueError("Empty policy parameter file")
        header = rows[0].split()
        if len(header) != 2:
            raise ValueError(f"Invalid policy header '{rows[0]}'. Must be 'kind d'")
        kind, dim = header[0], int(header[1])
        values = [float(x) for row in rows[1:] for x in row.split()]
        if len(values) != dim:
            raise ValueError(f"Policy header declares d={dim} but {len(values)} values follow")
        return cls(kind=kind, theta=np.array(values))
