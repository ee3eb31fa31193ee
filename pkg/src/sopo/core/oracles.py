"""
Exact oracles for small tabular MDPs.

Dynamic programming gives the objective, state marginals and the policy
gradient; trajectory enumeration gives the exact law of τ, against which
every estimator mean and moment is checked. Enumeration sums accumulate in
extended precision.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from models import TabularMDP, TheoryConstants, Trajectory
from .config import Config
from .errors import TooLarge, Unsupported
from .policy import Policy, TabularSoftmaxPolicy


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrajectoryLaw:
    """Every trajectory with positive probability, as parallel arrays."""
    states: np.ndarray  # (N, H)
    actions: np.ndarray  # (N, H)
    rewards: np.ndarray  # (N, H)
    probs: np.ndarray  # (N,)

    @property
    def size(self) -> int:
        return int(self.probs.shape[0])

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(states=self.states[i], actions=self.actions[i], rewards=self.rewards[i])

    def expectation(self, fn: Callable[[Trajectory], np.ndarray]) -> np.ndarray:
        """Σ_τ p(τ) fn(τ) accumulated in long double."""
        total = None
        for i in range(self.size):
            value = np.asarray(fn(self.trajectory(i)), dtype=np.longdouble) * np.longdouble(self.probs[i])
            total = value if total is None else total + value
        return np.asarray(total, dtype=float)


def _require_tabular(policy: Policy) -> TabularSoftmaxPolicy:
    if not isinstance(policy, TabularSoftmaxPolicy):
        raise Unsupported(f"Exact oracles need a tabular softmax policy, got {type(policy).__name__}")
    return policy


def _check_dp_budget(mdp: TabularMDP) -> None:
    size = mdp.n_states * mdp.n_actions
    if size > Config.DP_BUDGET:
        raise TooLarge(f"DP over {size} state-action pairs exceeds the budget of {Config.DP_BUDGET}")


def state_marginals(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int) -> np.ndarray:
    """μ_h(s) = Pr(s_h = s) for h < H; shape (H, S)."""
    _check_dp_budget(mdp)
    pi = _require_tabular(policy).probability_table(theta)
    # P_π[s, s'] = Σ_a π(a|s) P[s, a, s']
    p_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    marginals = np.zeros((H, mdp.n_states))
    marginals[0] = mdp.initial_dist
    for h in range(1, H):
        marginals[h] = marginals[h - 1] @ p_pi
    return marginals


def q_values(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int,
             gamma: Optional[float] = None) -> np.ndarray:
    """
    Q_h(s, a) = γ^h r(s, a) + Σ_s' P(s'|s, a) V_{h+1}(s'), discounted from time 0.

    Shape (H, S, A).
    """
    _check_dp_budget(mdp)
    gamma = mdp.gamma if gamma is None else gamma
    pi = _require_tabular(policy).probability_table(theta)
    q = np.zeros((H, mdp.n_states, mdp.n_actions))
    v_next = np.zeros(mdp.n_states)
    for h in reversed(range(H)):
        q[h] = gamma ** h * mdp.reward + mdp.transition @ v_next
        v_next = (pi * q[h]).sum(axis=1)
    return q


def exact_objective(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int,
                    gamma: Optional[float] = None) -> float:
    """J(θ) = Σ_h γ^h Σ_{s,a} μ_h(s) π_θ(a|s) r(s, a)."""
    gamma = mdp.gamma if gamma is None else gamma
    pi = _require_tabular(policy).probability_table(theta)
    marginals = state_marginals(mdp, policy, theta, H)
    expected_reward = (pi * mdp.reward).sum(axis=1)
    return float(np.sum(gamma ** np.arange(H) * (marginals @ expected_reward)))


def enumerate_trajectories(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int) -> TrajectoryLaw:
    """All (s, a) sequences of length H with their exact probabilities."""
    count = (mdp.n_states * mdp.n_actions) ** H
    if count > Config.ENUMERATION_BUDGET:
        raise TooLarge(f"Enumerating {count} trajectories exceeds the budget of {Config.ENUMERATION_BUDGET}")
    pi = _require_tabular(policy).probability_table(theta)
    S, A = mdp.n_states, mdp.n_actions

    states = np.arange(S)[:, None]
    actions = np.zeros((S, 0), dtype=np.int64)
    rewards = np.zeros((S, 0))
    probs = mdp.initial_dist.copy()
    for h in range(H):
        keep = probs > 0
        states, actions, rewards, probs = states[keep], actions[keep], rewards[keep], probs[keep]
        current = states[:, -1]
        # branch over actions
        states = np.repeat(states, A, axis=0)
        actions = np.repeat(actions, A, axis=0)
        rewards = np.repeat(rewards, A, axis=0)
        a = np.tile(np.arange(A), current.shape[0])
        s = np.repeat(current, A)
        probs = np.repeat(probs, A) * pi[s, a]
        actions = np.hstack([actions, a[:, None]])
        rewards = np.hstack([rewards, mdp.reward[s, a][:, None]])
        if h < H - 1:
            # branch over next states
            states = np.repeat(states, S, axis=0)
            actions = np.repeat(actions, S, axis=0)
            rewards = np.repeat(rewards, S, axis=0)
            nxt = np.tile(np.arange(S), s.shape[0])
            probs = np.repeat(probs, S) * mdp.transition[np.repeat(s, S), np.repeat(a, S), nxt]
            states = np.hstack([states, nxt[:, None]])
    keep = probs > 0
    logger.debug(f"Enumerated {int(keep.sum())} trajectories of horizon {H}")
    return TrajectoryLaw(states=states[keep], actions=actions[keep], rewards=rewards[keep], probs=probs[keep])


def enumerated_objective(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int,
                         gamma: Optional[float] = None) -> float:
    gamma = mdp.gamma if gamma is None else gamma
    law = enumerate_trajectories(mdp, policy, theta, H)
    returns = law.rewards.astype(np.longdouble) @ (np.longdouble(gamma) ** np.arange(H))
    return float(np.sum(law.probs.astype(np.longdouble) * returns))


def _dp_gradient(mdp: TabularMDP, policy: TabularSoftmaxPolicy, theta: np.ndarray, H: int,
                 gamma: float) -> np.ndarray:
    # ∇J = Σ_h Σ_s μ_h(s) Σ_a π(a|s)(e_a − π(·|s)) Q_h(s, a)
    pi = policy.probability_table(theta)
    marginals = state_marginals(mdp, policy, theta, H)
    q = q_values(mdp, policy, theta, H, gamma)
    v = (pi[None] * q).sum(axis=2, keepdims=True)
    blocks = (marginals[:, :, None] * pi[None] * (q - v)).sum(axis=0)
    return blocks.ravel()


def _central_difference(fn: Callable[[np.ndarray], np.ndarray], theta: np.ndarray, step: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    columns = []
    for i in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[i] = step
        columns.append((np.asarray(fn(theta + e)) - np.asarray(fn(theta - e))) / (2 * step))
    return np.stack(columns, axis=-1) if np.ndim(columns[0]) else np.array(columns)


def exact_gradient(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int,
                   gamma: Optional[float] = None, method: str = "dp") -> np.ndarray:
    """
    ∇J(θ) by one of three independent routes.

    dp: policy-gradient theorem with backward Q-values (exact).
    fd: central differences of exact_objective with step Config.FD_STEP.
    enumeration: Σ_τ p(τ) g(θ; τ), the mean of the trajectory estimator.
    """
    gamma = mdp.gamma if gamma is None else gamma
    softmax_policy = _require_tabular(policy)
    theta = np.asarray(theta, dtype=float)
    if method == "dp":
        return _dp_gradient(mdp, softmax_policy, theta, H, gamma)
    if method == "fd":
        return _central_difference(lambda x: exact_objective(mdp, policy, x, H, gamma), theta, Config.FD_STEP)
    if method == "enumeration":
        from .estimators import trajectory_gradients
        law = enumerate_trajectories(mdp, policy, theta, H)
        per_traj = trajectory_gradients(law.states, law.actions, law.rewards, theta, policy, gamma)
        return np.asarray(law.probs.astype(np.longdouble) @ per_traj.astype(np.longdouble), dtype=float)
    raise ValueError(f"Invalid gradient method '{method}'. Must be dp, fd or enumeration")


def exact_hessian(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int,
                  gamma: Optional[float] = None, method: str = "fd") -> np.ndarray:
    """
    ∇²J(θ), symmetrized.

    fd: central differences of the exact DP gradient.
    enumeration: Σ_τ p(τ) H(θ; τ) with the unbiased estimator.
    """
    gamma = mdp.gamma if gamma is None else gamma
    _require_tabular(policy)
    theta = np.asarray(theta, dtype=float)
    if theta.shape[0] > Config.HESSIAN_DIM_LIMIT:
        raise TooLarge(f"Dense Hessian of dimension {theta.shape[0]} exceeds {Config.HESSIAN_DIM_LIMIT}")
    if method == "fd":
        hessian = _central_difference(lambda x: _dp_gradient(mdp, policy, x, H, gamma), theta, Config.FD_STEP)
    elif method == "enumeration":
        from .estimators import HvpOperator
        law = enumerate_trajectories(mdp, policy, theta, H)
        hessian = HvpOperator(law.states, law.actions, law.rewards, theta, policy, gamma,
                              weights=law.probs, extended=True).matrix()
    else:
        raise ValueError(f"Invalid Hessian method '{method}'. Must be fd or enumeration")
    return 0.5 * (hessian + hessian.T)


def truncation_bounds(R: float, gamma: float, H: int, G: float, L: float) -> Tuple[float, float, float]:
    """
    Gaps between the truncated and infinite-horizon objective and derivatives.

    Returns (R γ^H / (1−γ), D γ^H, D′ γ^H).
    """
    if not 0 < gamma < 1:
        raise ValueError(f"Invalid gamma '{gamma}'. Must be strictly between 0 and 1")
    if H < 1:
        raise ValueError(f"Invalid horizon '{H}'. Must be at least 1")
    constants = TheoryConstants(R=R, G=G, L=L, gamma=gamma, H=H)
    decay = gamma ** H
    return constants.value_gap_coefficient * decay, constants.D * decay, constants.D_prime * decay


def exact_grad_norm(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int) -> Optional[float]:
    """‖∇J(θ)‖ when the DP oracle applies, else None."""
    try:
        return float(np.linalg.norm(exact_gradient(mdp, policy, theta, H)))
    except (Unsupported, TooLarge):
        return None


def value_gap(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int) -> float:
    """|J_H(θ) − J_{2H}(θ)|, the observable horizon-doubling gap."""
    return abs(exact_objective(mdp, policy, theta, H) - exact_objective(mdp, policy, theta, 2 * H))


def gradient_gap(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int, method: str = "fd") -> float:
    return float(np.linalg.norm(
        exact_gradient(mdp, policy, theta, H, method=method)
        - exact_gradient(mdp, policy, theta, 2 * H, method=method)
    ))
