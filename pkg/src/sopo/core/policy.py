"""
Differentiable parametric policies with analytic score functions.

Two families act on a tabular MDP:
- TabularSoftmaxPolicy: one logit per (state, action), θ laid out row-major per state.
- LinearGaussianPolicy: a = Φ(s)ᵀW + σ∘ε with a global log-std; real actions
  reach the MDP through action binning, index = clip(round(a₀), 0, A−1).

Sampling consumes a fixed number of uniforms per action so that batched and
single-trajectory rollouts draw identical actions from identical streams.
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp, ndtri, softmax

from models import PolicySpec, TabularMDP
from .errors import Unsupported


logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny


class Policy(ABC):
    """Common interface of the parametric policies."""

    discrete: bool = True

    def __init__(self, spec: PolicySpec):
        self.spec = spec

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def uniforms_per_action(self) -> int:
        return 1

    @abstractmethod
    def log_prob(self, theta: np.ndarray, s: int, a) -> float:
        """log π_θ(a | s)."""

    @abstractmethod
    def sample_actions(self, theta: np.ndarray, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Actions for a vector of states from uniforms u of shape (n, uniforms_per_action)."""

    @abstractmethod
    def score_matrix(self, theta: np.ndarray, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Row h is ∇_θ log π_θ(a_h | s_h); shape (H, d)."""

    @abstractmethod
    def score_hvp_matrix(self, theta: np.ndarray, states: np.ndarray, actions: np.ndarray,
                         v: np.ndarray) -> np.ndarray:
        """Row h is ∇²_θ log π_θ(a_h | s_h)·v; shape (H, d)."""

    @abstractmethod
    def env_actions(self, actions: np.ndarray) -> np.ndarray:
        """Discrete MDP action indices for policy actions."""

    @abstractmethod
    def policy_constants(self, mdp: Optional[TabularMDP] = None) -> Tuple[float, float]:
        """Bounds (G, L) on the score norm and the score-Hessian norm."""

    def sample_action(self, theta: np.ndarray, s: int, rng: np.random.Generator):
        u = rng.random((1, self.uniforms_per_action))
        return self.sample_actions(theta, np.array([s]), u)[0]

    def score(self, theta: np.ndarray, s: int, a) -> np.ndarray:
        return self.score_matrix(theta, np.array([s]), self._action_batch(a))[0]

    def score_hvp(self, theta: np.ndarray, s: int, a, v: np.ndarray) -> np.ndarray:
        return self.score_hvp_matrix(theta, np.array([s]), self._action_batch(a), v)[0]

    def _action_batch(self, a) -> np.ndarray:
        return np.array([a])


class TabularSoftmaxPolicy(Policy):
    """π_θ(a | s) = softmax(θ[s, :])[a]."""

    def logits(self, theta: np.ndarray) -> np.ndarray:
        return np.asarray(theta, dtype=float).reshape(self.spec.n_states, self.spec.n_actions)

    def probability_table(self, theta: np.ndarray) -> np.ndarray:
        """π_θ(a | s) for every state, shape (S, A)."""
        return softmax(self.logits(theta), axis=1)

    def action_probs(self, theta: np.ndarray, s: int) -> np.ndarray:
        return softmax(self.logits(theta)[s])

    def log_prob(self, theta: np.ndarray, s: int, a) -> float:
        row = self.logits(theta)[s]
        return float(row[int(a)] - logsumexp(row))

    def sample_actions(self, theta: np.ndarray, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        probs = self.probability_table(theta)[states]
        cdf = np.cumsum(probs, axis=1)
        actions = (u[:, :1] >= cdf).sum(axis=1)
        return np.minimum(actions, self.spec.n_actions - 1).astype(np.int64)

    def score_matrix(self, theta: np.ndarray, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        steps = np.arange(states.shape[0])
        probs = self.probability_table(theta)[states]
        z = np.zeros((states.shape[0], self.spec.n_states, self.spec.n_actions))
        z[steps, states, :] = -probs
        z[steps, states, actions] += 1.0
        return z.reshape(states.shape[0], -1)

    def score_hvp_matrix(self, theta: np.ndarray, states: np.ndarray, actions: np.ndarray,
                         v: np.ndarray) -> np.ndarray:
        # The softmax log-density Hessian does not depend on the action taken
        states = np.asarray(states, dtype=np.int64)
        steps = np.arange(states.shape[0])
        probs = self.probability_table(theta)[states]
        vs = np.asarray(v, dtype=float).reshape(self.spec.n_states, self.spec.n_actions)[states]
        weighted = probs * vs
        block = -(weighted - probs * weighted.sum(axis=1, keepdims=True))
        out = np.zeros((states.shape[0], self.spec.n_states, self.spec.n_actions))
        out[steps, states, :] = block
        return out.reshape(states.shape[0], -1)

    def env_actions(self, actions: np.ndarray) -> np.ndarray:
        return np.asarray(actions, dtype=np.int64)

    def policy_constants(self, mdp: Optional[TabularMDP] = None) -> Tuple[float, float]:
        # ‖e_a − π‖ ≤ √2 and the block diag(π) − ππᵀ has spectral norm ≤ ½
        return math.sqrt(2.0), 0.5

    def fisher_identity_gap(self, theta: np.ndarray, s: int) -> float:
        """
        max |E_a[score scoreᵀ] + E_a[∇² log π]| over the (s, ·) block.

        Both expectations are exact sums over the actions of state s.
        """
        probs = self.action_probs(theta, s)
        n_actions = self.spec.n_actions
        block = slice(s * n_actions, (s + 1) * n_actions)
        actions = np.arange(n_actions)
        states = np.full(n_actions, s)
        scores = self.score_matrix(theta, states, actions)[:, block]
        fisher = (scores * probs[:, None]).T @ scores
        hessian = np.zeros((n_actions, n_actions))
        for j in range(n_actions):
            e = np.zeros(self.dim)
            e[s * n_actions + j] = 1.0
            rows = self.score_hvp_matrix(theta, states, actions, e)[:, block]
            hessian[:, j] = probs @ rows
        return float(np.max(np.abs(fisher + hessian)))


class LinearGaussianPolicy(Policy):
    """a ~ N(Φ(s)ᵀW, diag(exp(2·log_std)))."""

    discrete = False

    def __init__(self, spec: PolicySpec, feature_matrix: Optional[np.ndarray] = None):
        super().__init__(spec)
        if feature_matrix is None:
            if spec.feature_dim != spec.n_states:
                raise ValueError(
                    f"Invalid feature_dim '{spec.feature_dim}'. One-hot features need feature_dim = n_states"
                )
            feature_matrix = np.eye(spec.n_states)
        feature_matrix = np.asarray(feature_matrix, dtype=float)
        if feature_matrix.shape != (spec.n_states, spec.feature_dim):
            raise ValueError(f"Feature matrix has shape {feature_matrix.shape}, "
                             f"expected ({spec.n_states}, {spec.feature_dim})")
        self.features = feature_matrix

    @property
    def uniforms_per_action(self) -> int:
        return self.spec.action_dim

    def unpack(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        k, m = self.spec.feature_dim, self.spec.action_dim
        return theta[:k * m].reshape(k, m), theta[k * m:]

    def mean(self, theta: np.ndarray, states: np.ndarray) -> np.ndarray:
        weights, _ = self.unpack(theta)
        return self.features[np.asarray(states, dtype=np.int64)] @ weights

    def log_prob(self, theta: np.ndarray, s: int, a) -> float:
        _, log_std = self.unpack(theta)
        a = np.atleast_1d(np.asarray(a, dtype=float))
        z = (a - self.mean(theta, np.array([s]))[0]) / np.exp(log_std)
        return float(-0.5 * z @ z - log_std.sum() - 0.5 * a.shape[0] * math.log(2 * math.pi))

    def sample_actions(self, theta: np.ndarray, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        _, log_std = self.unpack(theta)
        u = np.clip(u[:, :self.spec.action_dim], _TINY, 1.0 - np.finfo(float).eps)
        return self.mean(theta, states) + np.exp(log_std) * ndtri(u)

    def _residuals(self, theta: np.ndarray, states: np.ndarray, actions: np.ndarray):
        _, log_std = self.unpack(theta)
        actions = np.asarray(actions, dtype=float).reshape(len(states), self.spec.action_dim)
        var = np.exp(2 * log_std)
        return actions - self.mean(theta, states), var

    def score_matrix(self, theta: np.ndarray, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        diff, var = self._residuals(theta, states, actions)
        phi = self.features[states]
        grad_w = phi[:, :, None] * (diff / var)[:, None, :]
        grad_log_std = diff ** 2 / var - 1.0
        return np.concatenate([grad_w.reshape(len(states), -1), grad_log_std], axis=1)

    def score_hvp_matrix(self, theta: np.ndarray, states: np.ndarray, actions: np.ndarray,
                         v: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        diff, var = self._residuals(theta, states, actions)
        phi = self.features[states]
        v_w, v_log_std = self.unpack(v)
        projected = phi @ v_w  # (H, m): Σ_k Φ_k V_W[k, j]
        scaled = diff / var
        w_part = phi[:, :, None] * (-projected / var - 2.0 * scaled * v_log_std)[:, None, :]
        log_std_part = -2.0 * scaled * projected - 2.0 * diff * scaled * v_log_std
        return np.concatenate([w_part.reshape(len(states), -1), log_std_part], axis=1)

    def env_actions(self, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions, dtype=float)
        first = actions[..., 0] if actions.ndim > 1 else actions
        return np.clip(np.rint(first), 0, self.spec.n_actions - 1).astype(np.int64)

    def policy_constants(self, mdp: Optional[TabularMDP] = None) -> Tuple[float, float]:
        raise Unsupported("Linear-Gaussian scores are unbounded; supply G and L explicitly")

    def _action_batch(self, a) -> np.ndarray:
        return np.atleast_1d(np.asarray(a, dtype=float))[None, :]


def build_policy(spec: PolicySpec, feature_matrix: Optional[np.ndarray] = None) -> Policy:
    """Instantiate the policy family named by a PolicySpec."""
    if spec.kind == "tabular-softmax":
        return TabularSoftmaxPolicy(spec)
    if spec.kind == "linear-gaussian":
        return LinearGaussianPolicy(spec, feature_matrix)
    raise ValueError(f"Invalid policy kind '{spec.kind}'. Must be tabular-softmax or linear-gaussian")


def policy_for_mdp(kind: str, mdp: TabularMDP) -> Policy:
    return build_policy(PolicySpec(kind=kind, n_states=mdp.n_states, n_actions=mdp.n_actions))


def finite_difference_score(policy: Policy, theta: np.ndarray, s: int, a, step: float = 1e-6) -> np.ndarray:
    """Central differences of log π_θ(a | s), used by the derivative checks."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    for i in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[i] = step
        out[i] = (policy.log_prob(theta + e, s, a) - policy.log_prob(theta - e, s, a)) / (2 * step)
    return out
