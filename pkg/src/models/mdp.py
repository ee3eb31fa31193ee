"""
Tabular MDP and trajectory models.

A TabularMDP is validated on construction: transition rows and the
initial distribution must be probability vectors and every reward must
lie within the declared bound.
"""

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator, validator


PROBABILITY_TOL = 1e-12


class TabularMDP(BaseModel):
    """Finite MDP with bounded cost-style rewards (the objective is minimized)."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n_states: int = Field(..., ge=1, description="Number of states S")
    n_actions: int = Field(..., ge=1, description="Number of actions A")
    transition: np.ndarray = Field(..., description="P[s, a, s'] transition tensor")
    reward: np.ndarray = Field(..., description="r[s, a] table")
    initial_dist: np.ndarray = Field(..., description="Initial state distribution ρ")
    gamma: float = Field(..., ge=0, lt=1, description="Discount factor γ")
    reward_bound: float = Field(..., gt=0, description="R with |r(s, a)| ≤ R")
    horizon: Optional[int] = Field(None, ge=1, description="Default truncation horizon H")
    name: Optional[str] = Field(None, description="Fixture or generator name")

    @validator('transition', 'reward', 'initial_dist', pre=True)
    def as_float_array(cls, v):
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("MDP tables must be finite")
        return arr

    @validator('transition')
    def validate_transition(cls, v, values):
        """Every P[s, a, ·] must be a probability vector."""
        shape = (values.get('n_states'), values.get('n_actions'), values.get('n_states'))
        if v.shape != shape:
            raise ValueError(f"Transition tensor has shape {v.shape}, expected {shape}")
        if np.any(v < 0):
            raise ValueError("Transition probabilities must be nonnegative")
        row_error = np.max(np.abs(v.sum(axis=2) - 1.0))
        if row_error > PROBABILITY_TOL:
            raise ValueError(f"Transition rows must sum to 1 (max deviation {row_error:.3e})")
        return v

    @validator('reward')
    def validate_reward_shape(cls, v, values):
        shape = (values.get('n_states'), values.get('n_actions'))
        if v.shape != shape:
            raise ValueError(f"Reward table has shape {v.shape}, expected {shape}")
        return v

    @validator('initial_dist')
    def validate_initial_dist(cls, v, values):
        if v.shape != (values.get('n_states'),):
            raise ValueError(f"Initial distribution has shape {v.shape}, expected ({values.get('n_states')},)")
        if np.any(v < 0) or abs(v.sum() - 1.0) > PROBABILITY_TOL:
            raise ValueError("Initial distribution must be a probability vector")
        return v

    @validator('reward_bound')
    def validate_reward_bound(cls, v, values):
        """Rewards must respect |r(s, a)| ≤ R."""
        reward = values.get('reward')
        if reward is not None and np.max(np.abs(reward)) > v:
            raise ValueError(f"Reward bound violated: max |r| = {np.max(np.abs(reward)):.6g} > R = {v}")
        return v

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.transition == 0) | (self.transition == 1)))


class Trajectory(BaseModel):
    """One truncated rollout (s_h, a_h, r_h), h = 0..H−1."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    states: np.ndarray = Field(..., description="Visited states s_0..s_{H−1}")
    actions: np.ndarray = Field(..., description="Actions; integer indices or real vectors (H×m)")
    rewards: np.ndarray = Field(..., description="Rewards r_0..r_{H−1}")
    reward_bound: Optional[float] = Field(None, gt=0, description="R of the MDP that produced the rollout")

    @validator('states', pre=True)
    def as_state_array(cls, v):
        arr = np.asarray(v, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("Trajectory states must be a nonempty sequence")
        return arr

    @validator('actions', pre=True)
    def as_action_array(cls, v):
        return np.asarray(v)

    @validator('rewards', pre=True)
    def as_reward_array(cls, v):
        return np.asarray(v, dtype=float)

    @validator('rewards')
    def validate_lengths(cls, v, values):
        """States, actions and rewards share one length H."""
        states = values.get('states')
        actions = values.get('actions')
        if states is not None and actions is not None:
            if not (len(states) == len(actions) == len(v)):
                raise ValueError(
                    f"Trajectory sequences differ in length: "
                    f"{len(states)} states, {len(actions)} actions, {len(v)} rewards"
                )
        return v

    @model_validator(mode="after")
    def check_reward_bound(self):
        """Rewards of a rollout tagged with its MDP bound must satisfy |r_h| ≤ R."""
        if self.reward_bound is not None and self.rewards.size and np.max(np.abs(self.rewards)) > self.reward_bound:
            raise ValueError(f"Reward bound violated: max |r| = {np.max(np.abs(self.rewards)):.6g} "
                             f"> R = {self.reward_bound}")
        return self

    @property
    def horizon(self) -> int:
        return int(self.states.shape[0])
