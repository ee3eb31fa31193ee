"""
Trajectory-based gradient and Hessian estimators.

Per-trajectory quantities are computed on stacked arrays: a batch of N
trajectories of horizon H gives a score tensor Z of shape (N, H, d), and
batch means are fixed-order weighted sums over it. The same code path
serves Monte-Carlo batches (weights 1/N) and the enumeration oracle
(weights p(τ), accumulated in long double).

∇log p(τ; θ) is Σ_h ∇log π_θ(a_h | s_h); transition terms do not depend on θ.
"""

import logging
import math
import warnings
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from models import (
    CostEstimate,
    GradEstimate,
    HvpBatch,
    LinearBaseline,
    TabularMDP,
    TheoryConstants,
    Trajectory,
    VarianceReport,
)
from .config import Config
from .errors import DegenerateBaseline, TooLarge
from .mdp import discount_weights, sample_batch, sample_trajectory
from .policy import Policy


logger = logging.getLogger(__name__)


def stack_trajectories(trajectories: Sequence[Trajectory]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """States (N, H), actions (N, H[, m]) and rewards (N, H) of equal-horizon trajectories."""
    states = np.stack([traj.states for traj in trajectories])
    actions = np.stack([traj.actions for traj in trajectories])
    rewards = np.stack([traj.rewards for traj in trajectories])
    return states, actions, rewards


def rewards_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Ψ_h = Σ_{i≥h} γ^i r_i along the last axis."""
    discounted = np.asarray(rewards, dtype=float) * discount_weights(gamma, rewards.shape[-1])
    return np.flip(np.cumsum(np.flip(discounted, axis=-1), axis=-1), axis=-1)


def score_tensor(policy: Policy, theta: np.ndarray, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    n, H = states.shape
    flat_actions = actions.reshape((n * H,) + actions.shape[2:])
    return policy.score_matrix(theta, states.ravel(), flat_actions).reshape(n, H, -1)


def _weighted_sum(weights: np.ndarray, rows: np.ndarray, extended: bool) -> np.ndarray:
    if extended:
        return np.asarray(np.asarray(weights, dtype=np.longdouble) @ np.asarray(rows, dtype=np.longdouble),
                          dtype=float)
    return weights @ rows


# --- Linear baseline -------------------------------------------------------

def baseline_features(kind: str, states: np.ndarray, n_states: int, horizon: int) -> np.ndarray:
    """
    Feature rows φ(s_h, h) for states of shape (N, H); returns (N·H, k).

    bias: [1]; one-hot: e_s; state-time: e_s plus (h/H, (h/H)², (h/H)³).
    """
    states = np.asarray(states, dtype=np.int64)
    n, H = states.shape
    flat = states.ravel()
    if kind == "bias":
        return np.ones((n * H, 1))
    one_hot = np.eye(n_states)[flat]
    if kind == "one-hot":
        return one_hot
    if kind == "state-time":
        t = np.tile(np.arange(H, dtype=float) / horizon, n)
        return np.column_stack([one_hot, t, t ** 2, t ** 3])
    raise ValueError(f"Invalid baseline features '{kind}'. Must be bias, one-hot or state-time")


def fit_linear_baseline(trajectories: Sequence[Trajectory], gamma: float, features: str = "state-time",
                        n_states: Optional[int] = None) -> LinearBaseline:
    """
    Least-squares fit of the returns-to-go Ψ_h onto state features.

    A singular Gram matrix gets a 1e-8 ridge and a DegenerateBaseline warning.
    """
    if not trajectories:
        raise ValueError("Fitting a baseline needs at least one trajectory")
    states, _, rewards = stack_trajectories(trajectories)
    if n_states is None:
        n_states = int(states.max()) + 1
    horizon = states.shape[1]
    X = baseline_features(features, states, n_states, horizon)
    y = rewards_to_go(rewards, gamma).ravel()
    gram = X.T @ X
    ridge = 0.0
    if np.linalg.eigvalsh(gram)[0] <= 1e-8:
        ridge = 1e-8
        warnings.warn(f"Baseline Gram matrix is singular ({features} features); applying ridge {ridge}",
                      DegenerateBaseline, stacklevel=2)
    weights = linalg.solve(gram + ridge * np.eye(gram.shape[0]), X.T @ y, assume_a="pos")
    return LinearBaseline(weights=weights, features=features, n_states=n_states, horizon=horizon,
                          fitted=True, ridge=ridge)


def baseline_values(baseline: LinearBaseline, states: np.ndarray) -> np.ndarray:
    """b(s_h, h) for states of shape (N, H)."""
    states = np.atleast_2d(states)
    X = baseline_features(baseline.features, states, baseline.n_states, baseline.horizon)
    return (X @ baseline.weights).reshape(states.shape)


def baseline_normal_residual(baseline: LinearBaseline, trajectories: Sequence[Trajectory], gamma: float) -> float:
    """‖Xᵀ(Xw − y) + ridge·w‖, zero at an exact least-squares fit."""
    states, _, rewards = stack_trajectories(trajectories)
    X = baseline_features(baseline.features, states, baseline.n_states, baseline.horizon)
    y = rewards_to_go(rewards, gamma).ravel()
    return float(np.linalg.norm(X.T @ (X @ baseline.weights - y) + baseline.ridge * baseline.weights))


# --- Gradient estimators ---------------------------------------------------

def trajectory_gradients(states: np.ndarray, actions: np.ndarray, rewards: np.ndarray, theta: np.ndarray,
                         policy: Policy, gamma: float,
                         baseline: Optional[LinearBaseline] = None) -> np.ndarray:
    """g(θ; τ) = Σ_h Ψ_h ∇log π(a_h | s_h) for every trajectory; shape (N, d)."""
    z = score_tensor(policy, theta, states, actions)
    psi = rewards_to_go(rewards, gamma)
    if baseline is not None:
        psi = psi - baseline_values(baseline, states)
    return np.einsum("nh,nhd->nd", psi, z)


def pgt_gradient(traj: Trajectory, theta: np.ndarray, policy: Policy, gamma: float,
                 baseline: Optional[LinearBaseline] = None) -> np.ndarray:
    states, actions, rewards = stack_trajectories([traj])
    return trajectory_gradients(states, actions, rewards, theta, policy, gamma, baseline)[0]


def gpomdp_gradient(traj: Trajectory, theta: np.ndarray, policy: Policy, gamma: float) -> np.ndarray:
    """Σ_h (Σ_{t≤h} ∇log π_t) γ^h r_h."""
    states, actions, rewards = stack_trajectories([traj])
    u = np.cumsum(score_tensor(policy, theta, states, actions)[0], axis=0)
    weights = rewards[0] * discount_weights(gamma, traj.horizon)
    return weights @ u


def batch_gradient(trajectories: Sequence[Trajectory], theta: np.ndarray, policy: Policy, gamma: float,
                   baseline: Optional[LinearBaseline] = None) -> GradEstimate:
    """g(θ; 𝓜) with its sum of squared norms and the batch mean return."""
    states, actions, rewards = stack_trajectories(trajectories)
    per_traj = trajectory_gradients(states, actions, rewards, theta, policy, gamma, baseline)
    n = per_traj.shape[0]
    returns = rewards @ discount_weights(gamma, states.shape[1])
    return GradEstimate(
        g=per_traj.mean(axis=0),
        n_trajectories=n,
        sum_sq_norm=float(np.sum(per_traj ** 2)),
        mean_cost=float(returns.mean()),
        env_steps=int(states.size),
    )


def batch_cost(trajectories: Sequence[Trajectory], gamma: float) -> CostEstimate:
    if not trajectories:
        return CostEstimate(value=0.0, n_trajectories=0, env_steps=0)
    _, _, rewards = stack_trajectories(trajectories)
    returns = rewards @ discount_weights(gamma, rewards.shape[1])
    return CostEstimate(value=float(returns.mean()), n_trajectories=len(trajectories),
                        env_steps=int(rewards.size))


# --- Hessian estimators ----------------------------------------------------

class HvpOperator:
    """
    Stochastic Hessian action over a fixed set of trajectories.

    standard: Σ_h Ψ_h ∇²log π_h·v + μ (∇log p·v) g(θ; τ)
    vr-uuT:   Σ_h γ^h r_h (u_h·v) u_h + Σ_h Ψ_h ∇²log π_h·v, u_h = Σ_{t≤h} ∇log π_t

    The operator is frozen: repeated calls with the same v return the same vector.
    """

    def __init__(self, states: np.ndarray, actions: np.ndarray, rewards: np.ndarray, theta: np.ndarray,
                 policy: Policy, gamma: float, mu: float = 1.0, variant: str = "standard",
                 weights: Optional[np.ndarray] = None, extended: bool = False):
        if variant not in ("standard", "vr-uuT"):
            raise ValueError(f"Invalid Hessian variant '{variant}'. Must be standard or vr-uuT")
        self.states = np.asarray(states, dtype=np.int64)
        self.actions = actions
        self.theta = np.asarray(theta, dtype=float)
        self.policy = policy
        self.mu = mu
        self.variant = variant
        self.extended = extended
        n, H = self.states.shape
        self.n = n
        self.weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
        self.flat_actions = actions.reshape((n * H,) + actions.shape[2:])
        z = score_tensor(policy, self.theta, self.states, actions)
        self.psi = rewards_to_go(rewards, gamma)
        self.score_sum = z.sum(axis=1)
        self.gradients = np.einsum("nh,nhd->nd", self.psi, z)
        self.u = np.cumsum(z, axis=1)
        self.step_weights = np.asarray(rewards, dtype=float) * discount_weights(gamma, H)
        self.calls = 0

    @classmethod
    def from_batch(cls, batch: HvpBatch, policy: Policy, gamma: float) -> "HvpOperator":
        states, actions, rewards = stack_trajectories(batch.trajectories)
        return cls(states, actions, rewards, batch.theta, policy, gamma, batch.mu, batch.variant)

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory], theta: np.ndarray, policy: Policy,
                          gamma: float, mu: float = 1.0, variant: str = "standard") -> "HvpOperator":
        states, actions, rewards = stack_trajectories(trajectories)
        return cls(states, actions, rewards, theta, policy, gamma, mu, variant)

    @property
    def dim(self) -> int:
        return int(self.theta.shape[0])

    def curvature_term(self, v: np.ndarray) -> np.ndarray:
        """Per-trajectory Σ_h Ψ_h ∇²log π_h·v = ∇g(θ; τ)·v; shape (N, d)."""
        rows = self.policy.score_hvp_matrix(self.theta, self.states.ravel(), self.flat_actions, v)
        rows = rows.reshape(self.n, self.states.shape[1], -1)
        return np.einsum("nh,nhd->nd", self.psi, rows)

    def outer_term(self, v: np.ndarray) -> np.ndarray:
        """Per-trajectory (∇log p·v) g(θ; τ); shape (N, d)."""
        return (self.score_sum @ v)[:, None] * self.gradients

    def per_trajectory(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.variant == "standard":
            return self.curvature_term(v) + self.mu * self.outer_term(v)
        projections = np.einsum("nhd,d->nh", self.u, v)
        outer = np.einsum("nh,nhd->nd", self.step_weights * projections, self.u)
        return outer + self.curvature_term(v)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        self.calls += 1
        return _weighted_sum(self.weights, self.per_trajectory(v), self.extended)

    def matrix(self) -> np.ndarray:
        """Dense weighted-mean Hessian estimate (columns are actions on basis vectors)."""
        eye = np.eye(self.dim)
        return np.column_stack([self(eye[j]) for j in range(self.dim)])

    def per_trajectory_matrices(self) -> np.ndarray:
        """Dense H(θ; τ) for every trajectory; shape (N, d, d)."""
        eye = np.eye(self.dim)
        return np.stack([self.per_trajectory(eye[j]) for j in range(self.dim)], axis=2)


def hessian_vector(batch: HvpBatch, v: np.ndarray, policy: Policy, gamma: float) -> np.ndarray:
    """Batch-mean stochastic Hessian action H(θ; 𝓜)·v."""
    return HvpOperator.from_batch(batch, policy, gamma)(v)


def optimal_mu(constants: TheoryConstants) -> float:
    """μ = 1 − √2·L / ((1−γ) G² H²), clamped to [0, 1]."""
    value = 1.0 - math.sqrt(2.0) * constants.L / ((1.0 - constants.gamma) * constants.G ** 2 * constants.H ** 2)
    return float(min(max(value, 0.0), 1.0))


# --- Hessian-aided variance reduction --------------------------------------

def havr_estimate(theta_prev: np.ndarray, theta_curr: np.ndarray, policy: Policy, mdp: TabularMDP, H: int,
                  gamma: float, m: int, rng: np.random.Generator, mu: float = 1.0,
                  variant: str = "standard") -> GradEstimate:
    """
    ξ = (1/m) Σ_i H(θ(a_i); τ_i)·v with a_i ~ U[0, 1], τ_i ~ p(·; θ(a_i)), v = θ_curr − θ_prev.

    Each sample draws its own (a, τ) pair from a spawned child generator.
    A zero move needs no samples.
    """
    if m < 1:
        raise ValueError(f"Invalid HAVR sample count '{m}'. Must be at least 1")
    theta_prev = np.asarray(theta_prev, dtype=float)
    theta_curr = np.asarray(theta_curr, dtype=float)
    v = theta_curr - theta_prev
    if not np.any(v):
        return GradEstimate(g=np.zeros_like(v), n_trajectories=1, sum_sq_norm=0.0, mean_cost=0.0, env_steps=0)

    actions = []
    costs = []
    for child in rng.spawn(m):
        a = child.random()
        theta_a = a * theta_curr + (1.0 - a) * theta_prev
        traj = sample_trajectory(mdp, policy, theta_a, H, child)
        operator = HvpOperator.from_trajectories([traj], theta_a, policy, gamma, mu, variant)
        actions.append(operator.per_trajectory(v)[0])
        costs.append(float(traj.rewards @ discount_weights(gamma, H)))
    actions = np.array(actions)
    return GradEstimate(
        g=actions.mean(axis=0),
        n_trajectories=m,
        sum_sq_norm=float(np.sum(actions ** 2)),
        mean_cost=float(np.mean(costs)),
        env_steps=m * H,
    )


def havr_correction(theta_prev: np.ndarray, theta_curr: np.ndarray, policy: Policy, mdp: TabularMDP, H: int,
                    gamma: float, m: int, rng: np.random.Generator, mu: float = 1.0,
                    variant: str = "standard") -> np.ndarray:
    return havr_estimate(theta_prev, theta_curr, policy, mdp, H, gamma, m, rng, mu, variant).g


def expected_havr_correction(theta_prev: np.ndarray, theta_curr: np.ndarray, policy: Policy, mdp: TabularMDP,
                             H: int, gamma: float, nodes: int = Config.QUADRATURE_NODES,
                             variant: str = "standard") -> np.ndarray:
    """
    E[ξ] = ∫₀¹ E_τ[H(θ(a); τ)]·v da by Gauss–Legendre quadrature over a and
    trajectory enumeration over τ.
    """
    from .oracles import enumerate_trajectories

    theta_prev = np.asarray(theta_prev, dtype=float)
    theta_curr = np.asarray(theta_curr, dtype=float)
    v = theta_curr - theta_prev
    x, w = leggauss(nodes)
    a_nodes = 0.5 * (x + 1.0)
    total = np.zeros_like(v, dtype=np.longdouble)
    for a, weight in zip(a_nodes, 0.5 * w):
        theta_a = a * theta_curr + (1.0 - a) * theta_prev
        law = enumerate_trajectories(mdp, policy, theta_a, H)
        operator = HvpOperator(law.states, law.actions, law.rewards, theta_a, policy, gamma,
                               variant=variant, weights=law.probs, extended=True)
        total += np.longdouble(weight) * np.asarray(operator(v), dtype=np.longdouble)
    return np.asarray(total, dtype=float)


# --- Moments and diagnostics -----------------------------------------------

def _centered_moment(values: np.ndarray, probs: np.ndarray) -> Tuple[np.ndarray, float]:
    p = probs.astype(np.longdouble)
    flat = values.reshape(values.shape[0], -1).astype(np.longdouble)
    mean = p @ flat
    moment = p @ np.sum((flat - mean) ** 2, axis=1)
    return np.asarray(mean, dtype=float).reshape(values.shape[1:]), float(moment)


def pairwise_batch_moment(values: np.ndarray, probs: np.ndarray) -> float:
    """Exact second moment of the mean of two i.i.d. draws, by double enumeration."""
    flat = values.reshape(values.shape[0], -1)
    mean = probs @ flat
    centered = flat - mean
    pair = 0.5 * (centered[:, None, :] + centered[None, :, :])
    joint = probs[:, None] * probs[None, :]
    return float(np.sum(joint * np.sum(pair ** 2, axis=2)))


def estimator_samples(estimator: str, theta: np.ndarray, policy: Policy, gamma: float, states: np.ndarray,
                      actions: np.ndarray, rewards: np.ndarray) -> np.ndarray:
    """Per-trajectory values of a named estimator: gradient, hessian or hessian-vr."""
    if estimator == "gradient":
        return trajectory_gradients(states, actions, rewards, theta, policy, gamma)
    if estimator in ("hessian", "hessian-vr"):
        variant = "standard" if estimator == "hessian" else "vr-uuT"
        return HvpOperator(states, actions, rewards, theta, policy, gamma, variant=variant).per_trajectory_matrices()
    raise ValueError(f"Invalid estimator '{estimator}'. Must be gradient, hessian or hessian-vr")


def batch_mean_moment(flat: np.ndarray, n: int, probs: Optional[np.ndarray] = None,
                      mean: Optional[np.ndarray] = None, rng: Optional[np.random.Generator] = None,
                      repeats: int = 10_000) -> Tuple[float, Optional[float]]:
    """
    Second moment of the n-sample mean, measured directly; returns (moment, standard error).

    With an enumerated law (probs, mean), n = 2 is exact by double enumeration
    and larger n draws `repeats` batches of indices from the law. Without one,
    the sampled rows are split into batches of n around their grand mean.
    """
    flat = flat.reshape(flat.shape[0], -1)
    if probs is not None:
        if n == 2:
            return pairwise_batch_moment(flat, probs), None
        if rng is None:
            raise ValueError(f"A generator is required for the batch moment at n={n}")
        p = probs / probs.sum()
        idx = rng.choice(len(p), size=(repeats, n), p=p)
        sq = np.sum((flat[idx].mean(axis=1) - np.ravel(mean)) ** 2, axis=1)
        return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(repeats))
    groups = flat.shape[0] // n
    if groups < 2:
        raise ValueError(f"{flat.shape[0]} samples are too few for batches of {n}")
    means = flat[:groups * n].reshape(groups, n, -1).mean(axis=1)
    sq = np.sum((means - means.mean(axis=0)) ** 2, axis=1)
    return float(sq.sum() / (groups - 1)), float(sq.std(ddof=1) / math.sqrt(groups))


def theory_constants_for(mdp: TabularMDP, policy: Policy, H: int) -> TheoryConstants:
    G, L = policy.policy_constants(mdp)
    return TheoryConstants(R=mdp.reward_bound, G=G, L=L, gamma=mdp.gamma, H=H)


def variance_report(estimator: str, theta: np.ndarray, mdp: TabularMDP, policy: Policy, n: int = 1,
                    rng: Optional[np.random.Generator] = None, H: Optional[int] = None,
                    constants: Optional[TheoryConstants] = None, mc_samples: int = 10_000,
                    batch_repeats: int = 10_000) -> VarianceReport:
    """
    Single-trajectory second moment E‖X − E X‖² of an estimator against its bound.

    Exact by enumeration when the trajectory space is small enough; otherwise
    Monte-Carlo with a reported standard error (requires rng). For n > 1 the
    moment of the n-sample mean is measured by batch_mean_moment, so it can be
    compared with moment / n.
    """
    from .oracles import enumerate_trajectories

    H = H or mdp.horizon
    if H is None:
        raise ValueError("A horizon is required for the variance report")
    theta = np.asarray(theta, dtype=float)
    constants = constants or theory_constants_for(mdp, policy, H)
    bound = {
        "gradient": constants.G_g ** 2,
        "hessian": constants.G_H ** 2,
        "hessian-vr": constants.G_H_prime ** 2,
    }.get(estimator)
    if bound is None:
        raise ValueError(f"Invalid estimator '{estimator}'. Must be gradient, hessian or hessian-vr")
    if n < 1:
        raise ValueError(f"Invalid batch size '{n}'. Must be at least 1")

    try:
        law = enumerate_trajectories(mdp, policy, theta, H)
        values = estimator_samples(estimator, theta, policy, mdp.gamma, law.states, law.actions, law.rewards)
        mean, moment = _centered_moment(values, law.probs)
        spectral = None
        if values.ndim == 3:
            norms = np.array([np.linalg.norm(x - mean, 2) ** 2 for x in values])
            spectral = float(law.probs @ norms)
        exact, sigma = True, None
        if n > 1:
            batch_moment, batch_sigma = batch_mean_moment(values, n, law.probs, mean, rng, batch_repeats)
    except TooLarge:
        if rng is None:
            raise
        batch = sample_batch(mdp, policy, theta, H, mc_samples, rng)
        states, actions, rewards = stack_trajectories(batch)
        values = estimator_samples(estimator, theta, policy, mdp.gamma, states, actions, rewards)
        flat = values.reshape(values.shape[0], -1)
        sq = np.sum((flat - flat.mean(axis=0)) ** 2, axis=1)
        moment = float(sq.sum() / (len(sq) - 1))
        sigma = float(sq.std(ddof=1) / math.sqrt(len(sq)))
        spectral, exact = None, False
        if n > 1:
            batch_moment, batch_sigma = batch_mean_moment(flat, n)
    if n == 1:
        batch_moment, batch_sigma = moment, sigma

    logger.debug(f"Variance of {estimator}: moment={moment:.6g} bound={bound:.6g} exact={exact}")
    return VarianceReport(
        estimator=estimator,
        moment=max(moment, 0.0),
        bound=bound,
        batch_size=n,
        batch_moment=max(batch_moment, 0.0),
        batch_sigma=batch_sigma,
        exact=exact,
        sigma=sigma,
        spectral_moment=spectral,
    )


def biased_mse_decomposition(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int,
                             mus: Iterable[float] = (0.0, 0.25, 0.5, 0.75, 1.0)) -> List[dict]:
    """
    Exact MSE of H_μ = ∇g + μ g ∇log pᵀ (Frobenius norm) for each μ, directly and
    as (μ−1)²‖E B‖² + Var A + μ² Var B + 2μ Cov(A, B) with A = ∇g, B = g ∇log pᵀ.
    """
    from .oracles import enumerate_trajectories

    theta = np.asarray(theta, dtype=float)
    law = enumerate_trajectories(mdp, policy, theta, H)
    operator = HvpOperator(law.states, law.actions, law.rewards, theta, policy, mdp.gamma)
    eye = np.eye(operator.dim)
    A = np.stack([operator.curvature_term(eye[j]) for j in range(operator.dim)], axis=2)
    B = operator.gradients[:, :, None] * operator.score_sum[:, None, :]
    p = law.probs
    EA = np.einsum("n,nij->ij", p, A)
    EB = np.einsum("n,nij->ij", p, B)
    target = EA + EB
    var_a = float(p @ np.sum((A - EA) ** 2, axis=(1, 2)))
    var_b = float(p @ np.sum((B - EB) ** 2, axis=(1, 2)))
    cov = float(p @ np.sum((A - EA) * (B - EB), axis=(1, 2)))
    bias_sq = float(np.sum(EB ** 2))

    rows = []
    for mu in mus:
        direct = float(p @ np.sum((A + mu * B - target) ** 2, axis=(1, 2)))
        decomposed = (mu - 1.0) ** 2 * bias_sq + var_a + mu ** 2 * var_b + 2 * mu * cov
        rows.append({
            "mu": float(mu),
            "mse": direct,
            "decomposed": decomposed,
            "bias_sq": (mu - 1.0) ** 2 * bias_sq,
            "var_curvature": var_a,
            "var_outer": mu ** 2 * var_b,
            "covariance": 2 * mu * cov,
        })
    return rows
