"""
Unit tests for the optimizer steps and the run loop.

Deterministic closures stand in for the sampled estimators where a test
needs exact model behaviour; the tabular benchmark covers seeding and
stream sharing between algorithms.
"""

import sys
import unittest
from pathlib import Path
from unittest.mock import Mock

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent.parent / "src"))

from models import OptimizerState, PracticalConfig, ScheduleConfig
from sopo.core.mdp import load_benchmark
from sopo.core.optimizers import (
    DeterministicProblem,
    EnumerationProblem,
    PolicyOptimizationProblem,
    SopoOptimizer,
    drsopo_step,
    dvrsopo_step,
    fdtr_step,
    hapg_step,
    load_checkpoint,
    practical_step,
    reinforce_step,
    save_checkpoint,
)
from sopo.core.oracles import exact_gradient
from sopo.core.policy import policy_for_mdp
from sopo.core.utils import RandomStreams


def quadratic_problem(A, b) -> DeterministicProblem:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    return DeterministicProblem(lambda x: 0.5 * x @ A @ x + b @ x, lambda x: A @ x + b, lambda x, v: A @ v)


def double_well() -> DeterministicProblem:
    """(x² − 1)² + y², a saddle at the origin and minima at (±1, 0)."""

    def f(p):
        return (p[0] ** 2 - 1) ** 2 + p[1] ** 2

    def grad(p):
        return np.array([4 * p[0] * (p[0] ** 2 - 1), 2 * p[1]])

    def hvp(p, v):
        return np.array([(12 * p[0] ** 2 - 4) * v[0], 2 * v[1]])

    return DeterministicProblem(f, grad, hvp)


def rosenbrock() -> DeterministicProblem:
    def f(p):
        return (1 - p[0]) ** 2 + 100 * (p[1] - p[0] ** 2) ** 2

    def grad(p):
        return np.array([-2 * (1 - p[0]) - 400 * p[0] * (p[1] - p[0] ** 2), 200 * (p[1] - p[0] ** 2)])

    def hvp(p, v):
        hessian = np.array([[2 - 400 * (p[1] - 3 * p[0] ** 2), -400 * p[0]], [-400 * p[0], 200.0]])
        return hessian @ v

    return DeterministicProblem(f, grad, hvp)


def cubic_problem() -> DeterministicProblem:
    """−x + 0.005x² + 10x³: the quadratic model at 0 badly overpredicts the decrease."""
    return DeterministicProblem(
        lambda x: float(-x[0] + 0.005 * x[0] ** 2 + 10 * x[0] ** 3),
        lambda x: np.array([-1 + 0.01 * x[0] + 30 * x[0] ** 2]),
        lambda x, v: np.array([(0.01 + 60 * x[0]) * v[0]]),
    )


def constant_gradient(g) -> DeterministicProblem:
    g = np.asarray(g, dtype=float)
    return DeterministicProblem(lambda x: float(g @ x), lambda x: g.copy(), lambda x, v: np.zeros_like(v))


@pytest.fixture
def streams():
    return RandomStreams(0)


@pytest.fixture
def bench():
    mdp = load_benchmark("bench3x2")
    return mdp, policy_for_mdp("tabular-softmax", mdp)


class TestDimensionReducedStep:
    """Basic DR-SOPO iterations."""

    def test_zero_reward_keeps_theta(self, bench, streams):
        mdp, policy = bench
        flat = mdp.model_copy(update={"reward": np.zeros((3, 2))})
        problem = EnumerationProblem(flat, policy, 3)
        theta = np.random.default_rng(0).normal(size=6)
        outcome = drsopo_step(OptimizerState.initial(theta, delta=0.2), problem, ScheduleConfig(), streams)
        np.testing.assert_array_equal(outcome.state.theta, theta)
        assert outcome.record.grad_norm == 0.0

    def test_newton_step_on_one_dimensional_quadratic(self, streams):
        """½θ² from θ = 1 with a large radius lands on 0 in one step."""
        problem = quadratic_problem([[1.0]], [0.0])
        state = OptimizerState.initial(np.array([1.0]), delta=10.0)
        outcome = drsopo_step(state, problem, ScheduleConfig(delta=10.0), streams)
        np.testing.assert_allclose(outcome.state.theta, [0.0], atol=1e-12)
        assert outcome.state.t == 1
        np.testing.assert_allclose(outcome.state.d_prev, [-1.0])

    @pytest.mark.parametrize("make_problem,theta0", [
        (double_well, [1e-2, 0.5]),
        (rosenbrock, [-1.2, 1.0]),
    ])
    def test_reaches_second_order_point(self, make_problem, theta0):
        """Δ = 0.1 for at most 2000 iterations, starting next to the saddle or in the curved valley."""
        problem = make_problem()
        optimizer = SopoOptimizer("dr-sopo", problem, ScheduleConfig(delta=0.1, iterations=2000))
        result = optimizer.run(np.array(theta0))
        theta = result.final_state.theta
        assert np.linalg.norm(problem.grad(theta)) <= 1e-3
        hessian = np.column_stack([problem.hvp(theta, e) for e in np.eye(2)])
        assert np.linalg.eigvalsh(0.5 * (hessian + hessian.T)).min() >= -1e-2
        assert result.trace[-1].min_eig is not None
        assert result.trace[-1].min_eig >= -1e-2

    def test_saddle_escape_lands_in_a_well(self):
        problem = double_well()
        result = SopoOptimizer("dr-sopo", problem, ScheduleConfig(delta=0.1, iterations=2000)).run(
            np.array([1e-2, 0.5]))
        assert abs(result.final_state.theta[0]) == pytest.approx(1.0, abs=1e-3)

    def test_zero_gradient_reports_curvature_along_previous_step(self, streams):
        problem = quadratic_problem([[2.0, 0.0], [0.0, 5.0]], [0.0, 0.0])
        state = OptimizerState(theta=np.zeros(2), d_prev=np.array([0.0, 0.3]), last_move=np.array([0.0, 0.3]),
                               g_est=np.zeros(2), t=3, delta=0.1)
        outcome = drsopo_step(state, problem, ScheduleConfig(delta=0.1), streams)
        np.testing.assert_array_equal(outcome.step, np.zeros(2))
        np.testing.assert_array_equal(outcome.state.d_prev, [0.0, 0.3])
        assert outcome.record.min_eig == pytest.approx(5.0)

    def test_records_subspace_diagnostics(self, bench, streams):
        mdp, policy = bench
        problem = PolicyOptimizationProblem(mdp, policy, 3)
        schedule = ScheduleConfig(batch_grad=20, batch_hess=5, delta=0.3)
        state = OptimizerState.initial(np.zeros(6), delta=0.3)
        first = drsopo_step(state, problem, schedule, streams, exact_eval=True)
        second = drsopo_step(first.state, problem, schedule, streams, exact_eval=True)
        assert second.record.t == 2
        assert second.record.lam is not None and second.record.lam >= 0.0
        assert second.record.min_eig is not None
        assert second.record.exact_grad_norm == pytest.approx(
            float(np.linalg.norm(exact_gradient(mdp, policy, first.state.theta, 3))))
        assert np.linalg.norm(second.step) <= 0.3 * (1 + 1e-9)
        assert second.state.cumulative_env_steps == 2 * (20 + 5) * 3


class TestVarianceReducedStep:
    """Basic DVR-SOPO iterations."""

    def test_single_step_epoch_matches_dimension_reduced(self, bench):
        """q = 1 with |𝓜_0| = |𝓜_g| is pathwise identical to DR-SOPO."""
        mdp, policy = bench
        schedule = ScheduleConfig(batch_grad=20, batch_0=20, batch_hess=5, q=1, delta=0.3, iterations=6)
        runs = []
        for algorithm in ("dr-sopo", "dvr-sopo"):
            problem = PolicyOptimizationProblem(mdp, policy, 3)
            runs.append(SopoOptimizer(algorithm, problem, schedule, seed=3).run(np.zeros(6)))
        dr, dvr = runs
        assert [r.to_csv_row() for r in dr.trace] == [r.to_csv_row() for r in dvr.trace]
        np.testing.assert_array_equal(dr.final_state.theta, dvr.final_state.theta)

    def test_frozen_theta_keeps_gradient(self, bench, streams):
        """A zero move inside an epoch gives ξ = 0, so g_t is unchanged."""
        mdp, policy = bench
        g_prev = np.random.default_rng(1).normal(size=6)
        state = OptimizerState(theta=np.zeros(6), d_prev=np.zeros(6), last_move=np.zeros(6), g_est=g_prev,
                               t=1, epoch_pos=1, delta=0.3)
        outcome = dvrsopo_step(state, PolicyOptimizationProblem(mdp, policy, 3), ScheduleConfig(q=5), streams)
        np.testing.assert_array_equal(outcome.state.g_est, g_prev)
        assert outcome.state.epoch_pos == 2

    def test_exact_recursion_tracks_gradient(self, bench):
        """With enumeration-exact batches the recursive g_t equals ∇J(θ_t) across the epoch."""
        mdp, policy = bench
        optimizer = SopoOptimizer("dvr-sopo", EnumerationProblem(mdp, policy, 3),
                                  ScheduleConfig(q=5, delta=0.3, iterations=5))
        state = optimizer.initial_state(np.zeros(6))
        for _ in range(5):
            outcome = optimizer.step(state)
            np.testing.assert_allclose(outcome.state.g_est, exact_gradient(mdp, policy, state.theta, 3), atol=1e-8)
            state = outcome.state

    def test_epoch_position_wraps(self):
        problem = double_well()
        optimizer = SopoOptimizer("dvr-sopo", problem, ScheduleConfig(q=3, delta=0.2, iterations=7))
        result = optimizer.run(np.array([0.5, 0.5]))
        assert result.final_state.epoch_pos == 7 % 3
        assert [record.t for record in result.trace] == list(range(8))


class TestPracticalStep:
    """Radius-free iterations with ratio acceptance."""

    def test_exact_model_accepted_with_unit_ratio(self, streams):
        problem = quadratic_problem([[3.0, 0.5], [0.5, 1.0]], [1.0, -2.0])
        cfg = PracticalConfig(lambda_init=0.0, delta_max=100.0)
        state = OptimizerState.initial(np.zeros(2), lam=0.0)
        outcome = practical_step(state, problem, cfg, streams)
        assert outcome.record.accepted
        assert outcome.record.rho == pytest.approx(1.0, abs=1e-10)
        assert outcome.state.lam == pytest.approx(cfg.lambda_min)

    def test_overpredicting_model_rejected(self, streams):
        problem = cubic_problem()
        cfg = PracticalConfig(lambda_init=0.01, delta_max=0.5)
        state = OptimizerState.initial(np.zeros(1), lam=0.01)
        outcome = practical_step(state, problem, cfg, streams)
        assert not outcome.record.accepted
        assert outcome.record.rho < cfg.eta
        np.testing.assert_array_equal(outcome.state.theta, [0.0])
        np.testing.assert_array_equal(outcome.state.d_prev, [0.0])
        assert outcome.state.lam == pytest.approx(0.04)

    def test_coefficients_clipped_to_cap(self, streams):
        """An unclipped ‖α‖ = 2Δ_max is cut to exactly Δ_max."""
        problem = quadratic_problem([[1.0]], [0.0])
        cfg = PracticalConfig(lambda_init=0.0, delta_max=0.5)
        outcome = practical_step(OptimizerState.initial(np.array([1.0]), lam=0.0), problem, cfg, streams)
        np.testing.assert_allclose(outcome.step, [-0.5], atol=1e-12)
        assert outcome.record.accepted

    def test_zero_gradient_is_a_no_op(self, streams):
        problem = constant_gradient([0.0, 0.0])
        outcome = practical_step(OptimizerState.initial(np.ones(2), lam=0.01), problem, PracticalConfig(), streams)
        np.testing.assert_array_equal(outcome.state.theta, np.ones(2))
        assert outcome.state.t == 1

    def test_rosenbrock_converges(self):
        problem = rosenbrock()
        optimizer = SopoOptimizer("dr-sopo", problem, practical=PracticalConfig(delta_max=10.0, iterations=500))
        result = optimizer.run(np.array([-1.2, 1.0]))
        assert np.linalg.norm(problem.grad(result.final_state.theta)) <= 1e-3

    def test_unknown_variant(self, streams):
        with pytest.raises(ValueError):
            practical_step(OptimizerState.initial(np.ones(1)), cubic_problem(), PracticalConfig(), streams,
                           variant="fd")


class TestFullDimensionStep:
    """Steihaug-CG trust-region iterations."""

    def test_convex_quadratic_in_one_step(self, streams):
        A = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]])
        b = np.array([1.0, -1.0, 2.0])
        schedule = ScheduleConfig(delta=1e6, steihaug_tol=1e-12)
        outcome = fdtr_step(OptimizerState.initial(np.zeros(3), delta=1e6), quadratic_problem(A, b), schedule,
                            streams)
        np.testing.assert_allclose(outcome.state.theta, -np.linalg.solve(A, b), atol=1e-8)
        assert outcome.record.lam == 0.0

    def test_matches_subspace_step_in_two_dimensions(self, streams):
        problem = quadratic_problem([[3.0, 0.5], [0.5, 2.0]], [0.3, -0.2])
        schedule = ScheduleConfig(delta=10.0, steihaug_tol=1e-12)
        state = OptimizerState(theta=np.zeros(2), d_prev=np.array([0.1, 0.4]), last_move=np.array([0.1, 0.4]),
                               g_est=np.zeros(2), t=1, delta=10.0)
        fdtr = fdtr_step(state, problem, schedule, streams)
        drtr = drsopo_step(state, problem, schedule, streams)
        np.testing.assert_allclose(fdtr.step, drtr.step, atol=1e-8)

    def test_zero_gradient(self, streams):
        outcome = fdtr_step(OptimizerState.initial(np.ones(3), delta=0.5), constant_gradient(np.zeros(3)),
                            ScheduleConfig(), streams)
        np.testing.assert_array_equal(outcome.step, np.zeros(3))


class TestFirstOrderBaselines:
    """REINFORCE and HAPG normalized steps."""

    def test_normalized_gradient_step(self, streams):
        outcome = reinforce_step(OptimizerState.initial(np.zeros(3)), constant_gradient([3.0, 4.0, 0.0]),
                                 ScheduleConfig(learning_rate=0.01), streams)
        np.testing.assert_allclose(outcome.step, [-0.006, -0.008, 0.0])

    def test_zero_learning_rate(self, streams):
        outcome = reinforce_step(OptimizerState.initial(np.ones(3)), constant_gradient([3.0, 4.0, 0.0]),
                                 ScheduleConfig(learning_rate=0.0), streams)
        np.testing.assert_array_equal(outcome.state.theta, np.ones(3))

    def test_zero_gradient(self, streams):
        outcome = reinforce_step(OptimizerState.initial(np.ones(2)), constant_gradient([0.0, 0.0]),
                                 ScheduleConfig(), streams)
        np.testing.assert_array_equal(outcome.state.theta, np.ones(2))

    def test_hapg_step_has_learning_rate_length(self, bench, streams):
        mdp, policy = bench
        outcome = hapg_step(OptimizerState.initial(np.zeros(6)), PolicyOptimizationProblem(mdp, policy, 3),
                            ScheduleConfig(learning_rate=0.05, batch_0=30), streams)
        assert np.linalg.norm(outcome.step) == pytest.approx(0.05)

    @pytest.mark.slow
    def test_reinforce_improves_tiny_mdp(self, bench):
        mdp, policy = bench
        problem = PolicyOptimizationProblem(mdp, policy, 3)
        result = SopoOptimizer("reinforce", problem, ScheduleConfig(learning_rate=0.01, iterations=2000),
                               seed=1, exact_eval=False).run(np.zeros(6))
        assert problem.exact_objective(result.final_state.theta) < problem.exact_objective(np.zeros(6))


class TestSopoOptimizer:
    """The run loop, budgets and checkpoints."""

    def test_zero_iterations_gives_initial_record_only(self, bench):
        mdp, policy = bench
        optimizer = SopoOptimizer("dr-sopo", PolicyOptimizationProblem(mdp, policy, 3),
                                  ScheduleConfig(iterations=0))
        result = optimizer.run(np.zeros(6))
        assert len(result.trace) == 1
        assert result.trace[0].t == 0
        assert result.trace[0].env_steps == 0
        np.testing.assert_array_equal(result.sampled_theta, np.zeros(6))

    def test_env_step_budget_stops_run(self, bench):
        mdp, policy = bench
        optimizer = SopoOptimizer("reinforce", PolicyOptimizationProblem(mdp, policy, 3),
                                  ScheduleConfig(batch_grad=10, iterations=100), env_step_budget=60)
        result = optimizer.run(np.zeros(6))
        assert result.final_state.t == 2
        assert result.trace[-1].env_steps == 60

    def test_same_seed_same_trace(self, bench):
        mdp, policy = bench
        rows = []
        for _ in range(2):
            optimizer = SopoOptimizer("dr-sopo", PolicyOptimizationProblem(mdp, policy, 3),
                                      practical=PracticalConfig(batch_grad=10, batch_hess=5, iterations=5), seed=9)
            rows.append([record.to_csv_row() for record in optimizer.run(np.zeros(6)).trace])
        assert rows[0] == rows[1]

    def test_sampled_theta_is_an_iterate(self):
        optimizer = SopoOptimizer("dr-sopo", double_well(), ScheduleConfig(iterations=10))
        result = optimizer.run(np.array([0.3, 0.3]))
        assert len(result.iterates) == len(result.trace)
        assert any(np.array_equal(result.sampled_theta, theta) for theta in result.iterates)

    def test_invalid_algorithm(self):
        with pytest.raises(ValueError):
            SopoOptimizer("adam", double_well())

    def test_practical_needs_sopo_family(self):
        with pytest.raises(ValueError):
            SopoOptimizer("reinforce", double_well(), practical=PracticalConfig())

    def test_run_needs_start(self):
        with pytest.raises(ValueError):
            SopoOptimizer("dr-sopo", double_well()).run()

    def test_checkpoint_resume(self, tmp_path):
        path = tmp_path / "state.json"
        optimizer = SopoOptimizer("dr-sopo", double_well(), ScheduleConfig(iterations=3))
        first = optimizer.run(np.array([0.4, 0.2]), checkpoint=path)
        algorithm, state = load_checkpoint(path)
        assert algorithm == "dr-sopo"
        np.testing.assert_array_equal(state.theta, first.final_state.theta)

        resumed = SopoOptimizer("dr-sopo", double_well(), ScheduleConfig(iterations=5)).run(state=state)
        assert [record.t for record in resumed.trace] == [4, 5]

        full = SopoOptimizer("dr-sopo", double_well(), ScheduleConfig(iterations=5)).run(np.array([0.4, 0.2]))
        np.testing.assert_array_equal(resumed.final_state.theta, full.final_state.theta)

    def test_save_checkpoint_creates_parent(self, tmp_path):
        path = save_checkpoint(tmp_path / "nested" / "state.json", "hapg", OptimizerState.initial(np.ones(2)))
        assert path.is_file()


class TestOptimizerLogging(unittest.TestCase):
    """Log output of the run loop and of the λ safeguard."""

    def setUp(self):
        self.logger = Mock()

    def test_run_logs_start_and_finish(self):
        optimizer = SopoOptimizer("dr-sopo", double_well(), ScheduleConfig(iterations=2), logger=self.logger)
        optimizer.run(np.array([0.5, 0.5]))
        messages = [call.args[0] for call in self.logger.info.call_args_list]
        self.assertTrue(messages[0].startswith("🚀 Running dr-sopo (basic)"))
        self.assertIn("finished at t=2", messages[-1])

    def test_indefinite_system_raises_lambda(self):
        """Concave ½-curvature: λ goes 0.01 → 0.04 → 0.16 → 0.64 before Q + 2λG is definite."""
        concave = DeterministicProblem(lambda x: float(-0.5 * x @ x), lambda x: -x, lambda x, v: -v)
        state = OptimizerState.initial(np.array([1.0]), lam=0.01)
        outcome = practical_step(state, concave, PracticalConfig(lambda_init=0.01), RandomStreams(0),
                                 log=self.logger)
        self.assertEqual(self.logger.warning.call_count, 3)
        self.assertAlmostEqual(outcome.record.lam, 0.64)
        self.assertTrue(outcome.record.accepted)
