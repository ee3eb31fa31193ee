"""
Unit tests for tabular MDPs, rollouts and the exact oracles.

The oracles are checked against each other: dynamic programming against
trajectory enumeration, finite differences against both, and sampled
state visits against the DP marginals.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

sys.path.insert(0, str(Path(__file__).parent.parent.parent / "src"))

from models import PolicySpec, TabularMDP, Trajectory
from sopo.core.errors import TooLarge, Unsupported
from sopo.core.mdp import (
    fixtures_dir,
    load_benchmark,
    load_mdp,
    loads_mdp,
    random_mdp,
    sample_batch,
    sample_trajectory,
    save_mdp,
    truncated_return,
    validate_mdp_file,
)
from sopo.core.oracles import (
    enumerate_trajectories,
    enumerated_objective,
    exact_gradient,
    exact_hessian,
    exact_objective,
    state_marginals,
    truncation_bounds,
    value_gap,
)
from sopo.core.policy import LinearGaussianPolicy, policy_for_mdp


def single_state_mdp(reward: float = 1.0, gamma: float = 0.5) -> TabularMDP:
    return TabularMDP(n_states=1, n_actions=1, transition=[[[1.0]]], reward=[[reward]], initial_dist=[1.0],
                      gamma=gamma, reward_bound=max(abs(reward), 1.0))


def alternating_mdp() -> TabularMDP:
    """Two states that swap on every action, starting in state 0."""
    transition = np.zeros((2, 2, 2))
    transition[0, :, 1] = 1.0
    transition[1, :, 0] = 1.0
    return TabularMDP(n_states=2, n_actions=2, transition=transition, reward=[[0.1, 0.2], [0.3, 0.4]],
                      initial_dist=[1.0, 0.0], gamma=0.9, reward_bound=1.0)


class TestTabularMDP:
    """Construction-time invariants."""

    def test_rows_must_be_distributions(self):
        with pytest.raises(ValidationError) as exc_info:
            TabularMDP(n_states=1, n_actions=1, transition=[[[0.9]]], reward=[[0.0]], initial_dist=[1.0],
                       gamma=0.9, reward_bound=1.0)
        assert "sum to 1" in str(exc_info.value)

    def test_reward_bound_enforced(self):
        with pytest.raises(ValidationError) as exc_info:
            TabularMDP(n_states=1, n_actions=1, transition=[[[1.0]]], reward=[[2.0]], initial_dist=[1.0],
                       gamma=0.9, reward_bound=1.0)
        assert "Reward bound violated" in str(exc_info.value)

    def test_gamma_must_be_below_one(self):
        with pytest.raises(ValidationError):
            single_state_mdp(gamma=1.0)

    def test_random_mdp_is_seeded(self):
        a = random_mdp(4, 2, seed=3)
        b = random_mdp(4, 2, seed=3)
        np.testing.assert_array_equal(a.transition, b.transition)
        np.testing.assert_array_equal(a.reward, b.reward)
        assert np.max(np.abs(a.reward)) <= a.reward_bound


class TestFixtures:
    """The flat fixture format and the committed benchmarks."""

    def test_text_format_round_trip(self, tmp_path):
        mdp = random_mdp(3, 2, seed=1, horizon=4)
        path = save_mdp(mdp, tmp_path / "fixtures" / "random3x2.mdp")
        parsed = load_mdp(path)
        assert parsed.name == "random3x2"
        np.testing.assert_array_equal(parsed.transition, mdp.transition)
        np.testing.assert_array_equal(parsed.reward, mdp.reward)
        assert parsed.horizon == 4
        assert parsed.gamma == mdp.gamma

    def test_benchmarks_are_valid(self):
        for name in ("bench3x2", "bench5x3"):
            assert validate_mdp_file(fixtures_dir() / f"{name}.mdp") == []

    def test_benchmark_shapes(self):
        bench = load_benchmark("bench5x3")
        assert (bench.n_states, bench.n_actions, bench.horizon) == (5, 3, 20)
        assert bench.gamma == pytest.approx(0.95)

    def test_corrupt_fixture_reports_violation(self):
        violations = validate_mdp_file(fixtures_dir() / "corrupt_reward_bound.mdp")
        assert len(violations) == 1
        assert "Reward bound violated" in violations[0]

    def test_missing_rows_reported_with_context(self):
        with pytest.raises(ValueError) as exc_info:
            loads_mdp("2 1 3 0.9 1.0\nP 0 0 1.0 0.0\nr 0 0.0\nr 1 0.0\nrho 1.0 0.0\n")
        assert "transition rows" in str(exc_info.value)

    def test_unknown_benchmark(self):
        with pytest.raises(ValueError):
            load_benchmark("bench9x9")


class TestRollouts:
    """Sampling trajectories."""

    def test_deterministic_dynamics_give_unique_path(self):
        mdp = alternating_mdp()
        policy = policy_for_mdp("tabular-softmax", mdp)
        traj = sample_trajectory(mdp, policy, np.zeros(4), 4, np.random.default_rng(0))
        np.testing.assert_array_equal(traj.states, [0, 1, 0, 1])

    def test_horizon_one(self):
        mdp = load_benchmark("bench3x2")
        policy = policy_for_mdp("tabular-softmax", mdp)
        traj = sample_trajectory(mdp, policy, np.zeros(6), 1, np.random.default_rng(1))
        assert traj.horizon == 1
        assert mdp.initial_dist[traj.states[0]] > 0

    def test_batch_matches_spawned_single_draws(self):
        """Trajectory i of a batch is the single draw from the i-th spawned child."""
        mdp = load_benchmark("bench3x2")
        policy = policy_for_mdp("tabular-softmax", mdp)
        theta = np.random.default_rng(2).normal(size=6)
        batch = sample_batch(mdp, policy, theta, 3, 8, np.random.default_rng(42))
        threaded = sample_batch(mdp, policy, theta, 3, 8, np.random.default_rng(42), workers=3)
        children = np.random.default_rng(42).spawn(8)
        for i, child in enumerate(children):
            single = sample_trajectory(mdp, policy, theta, 3, child)
            np.testing.assert_array_equal(batch[i].states, single.states)
            np.testing.assert_array_equal(batch[i].actions, single.actions)
            np.testing.assert_array_equal(threaded[i].rewards, single.rewards)

    def test_visit_frequencies_match_marginals(self):
        """Empirical state visits stay within 4σ binomial bands of the DP marginals."""
        mdp = random_mdp(2, 2, seed=5)
        policy = policy_for_mdp("tabular-softmax", mdp)
        H, n = 3, 20_000
        batch = sample_batch(mdp, policy, np.zeros(4), H, n, np.random.default_rng(6))
        states = np.stack([traj.states for traj in batch])
        marginals = state_marginals(mdp, policy, np.zeros(4), H)
        for h in range(H):
            for s in range(2):
                p = marginals[h, s]
                freq = np.mean(states[:, h] == s)
                assert abs(freq - p) <= 4 * math.sqrt(p * (1 - p) / n) + 1e-12


class TestReturns:
    """Truncated discounted returns."""

    def test_constant_rewards(self):
        traj = Trajectory(states=[0, 0, 0], actions=[0, 0, 0], rewards=[1.0, 1.0, 1.0])
        assert truncated_return(traj, 0.9) == pytest.approx(2.71)

    def test_zero_rewards(self):
        traj = Trajectory(states=[0, 1], actions=[1, 0], rewards=[0.0, 0.0])
        assert truncated_return(traj, 0.9) == 0.0

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValidationError):
            Trajectory(states=[0, 1], actions=[0], rewards=[0.0, 1.0])

    def test_reward_bound_checked_when_given(self):
        with pytest.raises(ValidationError) as exc_info:
            Trajectory(states=[0, 1], actions=[0, 0], rewards=[0.5, -1.5], reward_bound=1.0)
        assert "Reward bound violated" in str(exc_info.value)
        traj = Trajectory(states=[0, 1], actions=[0, 0], rewards=[0.5, -1.5])
        assert traj.reward_bound is None

    def test_sampled_rollouts_carry_mdp_bound(self):
        mdp = random_mdp(3, 2, reward_bound=2.0, seed=8)
        policy = policy_for_mdp("tabular-softmax", mdp)
        single = sample_trajectory(mdp, policy, np.zeros(6), 4, np.random.default_rng(0))
        batch = sample_batch(mdp, policy, np.zeros(6), 4, 5, np.random.default_rng(1))
        assert single.reward_bound == 2.0
        assert all(traj.reward_bound == 2.0 for traj in batch)
        assert all(np.max(np.abs(traj.rewards)) <= 2.0 for traj in batch)

    def test_matches_extended_precision_sum(self):
        rng = np.random.default_rng(7)
        rewards = rng.uniform(-1, 1, size=25)
        traj = Trajectory(states=np.zeros(25), actions=np.zeros(25), rewards=rewards)
        reference = float(np.sum(rewards.astype(np.longdouble) * np.longdouble(0.95) ** np.arange(25)))
        assert truncated_return(traj, 0.95) == pytest.approx(reference, abs=1e-13)


class TestExactObjective:
    """J_H(θ) by dynamic programming and by enumeration."""

    def test_zero_reward(self):
        mdp = random_mdp(3, 2, seed=0).model_copy(update={"reward": np.zeros((3, 2))})
        policy = policy_for_mdp("tabular-softmax", mdp)
        assert exact_objective(mdp, policy, np.zeros(6), 5) == 0.0

    def test_single_state_geometric_sum(self):
        mdp = single_state_mdp()
        policy = policy_for_mdp("tabular-softmax", mdp)
        assert exact_objective(mdp, policy, np.zeros(1), 4) == pytest.approx(1.875, abs=1e-15)

    def test_dp_matches_enumeration(self):
        mdp = load_benchmark("bench3x2")
        policy = policy_for_mdp("tabular-softmax", mdp)
        for theta in (np.zeros(6), np.random.default_rng(8).normal(size=6)):
            assert exact_objective(mdp, policy, theta, 3) == pytest.approx(
                enumerated_objective(mdp, policy, theta, 3), abs=1e-12)

    def test_enumeration_probabilities_sum_to_one(self):
        mdp = load_benchmark("bench3x2")
        law = enumerate_trajectories(mdp, policy_for_mdp("tabular-softmax", mdp), np.zeros(6), 3)
        assert law.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert law.states.shape == (law.size, 3)

    def test_enumeration_budget(self):
        mdp = load_benchmark("bench5x3")
        with pytest.raises(TooLarge):
            enumerate_trajectories(mdp, policy_for_mdp("tabular-softmax", mdp), np.zeros(15), 20)

    def test_gaussian_policy_unsupported(self):
        mdp = load_benchmark("bench3x2")
        policy = LinearGaussianPolicy(PolicySpec(kind="linear-gaussian", n_states=3, n_actions=2))
        with pytest.raises(Unsupported):
            exact_objective(mdp, policy, np.zeros(policy.dim), 3)


class TestExactGradient:
    """∇J by DP, finite differences and enumeration."""

    def test_constant_reward_has_zero_gradient(self):
        mdp = random_mdp(3, 2, seed=4).model_copy(update={"reward": np.full((3, 2), 0.5)})
        policy = policy_for_mdp("tabular-softmax", mdp)
        theta = np.random.default_rng(9).normal(size=6)
        np.testing.assert_allclose(exact_gradient(mdp, policy, theta, 4), np.zeros(6), atol=1e-14)

    def test_three_routes_agree(self):
        mdp = random_mdp(2, 2, seed=3)
        policy = policy_for_mdp("tabular-softmax", mdp)
        theta = np.random.default_rng(10).normal(size=4)
        dp = exact_gradient(mdp, policy, theta, 4, method="dp")
        fd = exact_gradient(mdp, policy, theta, 4, method="fd")
        enum = exact_gradient(mdp, policy, theta, 4, method="enumeration")
        np.testing.assert_allclose(fd, enum, atol=1e-6)
        np.testing.assert_allclose(dp, enum, atol=1e-12)

    def test_unknown_method(self):
        mdp = random_mdp(2, 2, seed=3)
        with pytest.raises(ValueError):
            exact_gradient(mdp, policy_for_mdp("tabular-softmax", mdp), np.zeros(4), 2, method="adjoint")

    def test_hessian_routes_agree(self):
        mdp = load_benchmark("bench3x2")
        policy = policy_for_mdp("tabular-softmax", mdp)
        theta = np.random.default_rng(11).normal(size=6)
        fd = exact_hessian(mdp, policy, theta, 3, method="fd")
        enum = exact_hessian(mdp, policy, theta, 3, method="enumeration")
        np.testing.assert_allclose(fd, fd.T, atol=1e-12)
        np.testing.assert_allclose(fd, enum, atol=1e-6)


class TestTruncationBounds:
    """Gaps between truncated and infinite-horizon quantities."""

    def test_value_bound(self):
        value, _, _ = truncation_bounds(R=1.0, gamma=0.5, H=3, G=math.sqrt(2), L=0.5)
        assert value == pytest.approx(0.25)

    def test_bounds_decrease_with_horizon(self):
        previous = None
        for H in (5, 10, 20, 40, 80):
            bounds = truncation_bounds(1.0, 0.9, H, math.sqrt(2), 0.5)
            if previous is not None:
                assert all(b < p for b, p in zip(bounds, previous))
            previous = bounds

    def test_observed_gap_within_bound(self):
        mdp = load_benchmark("bench5x3")
        policy = policy_for_mdp("tabular-softmax", mdp)
        for H in (5, 10, 20):
            bound, _, _ = truncation_bounds(mdp.reward_bound, mdp.gamma, H, math.sqrt(2), 0.5)
            assert value_gap(mdp, policy, np.zeros(15), H) <= bound

    def test_invalid_gamma(self):
        with pytest.raises(ValueError):
            truncation_bounds(1.0, 0.0, 3, 1.0, 1.0)
