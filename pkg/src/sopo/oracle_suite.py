"""
Oracle cross-checks for the solvers, estimators and MDP oracles.

Every check compares two independent computations of the same quantity
(grid search against the subspace solver, finite differences against
trajectory enumeration, quadrature against exact gradient differences)
and reports the worst residual against its tolerance. A check that raises
is recorded as a failure rather than aborting the suite.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import stats

from models import OracleCheckResult, OracleReport, ScheduleConfig, TwoDimModel

try:
    # Try relative imports first (when used as package)
    from .core import PolicyOptimizationProblem, RandomStreams, SopoOptimizer, load_benchmark, policy_for_mdp
    from .core.estimators import (
        HvpOperator,
        biased_mse_decomposition,
        estimator_samples,
        expected_havr_correction,
        fit_linear_baseline,
        gpomdp_gradient,
        havr_estimate,
        pairwise_batch_moment,
        trajectory_gradients,
        variance_report,
    )
    from .core.mdp import BENCHMARKS, fixtures_dir, sample_batch, validate_mdp_file
    from .core.oracles import (
        enumerate_trajectories,
        enumerated_objective,
        exact_gradient,
        exact_hessian,
        exact_objective,
        gradient_gap,
        state_marginals,
        truncation_bounds,
        value_gap,
    )
    from .core.policy import finite_difference_score
    from .core.trust_region import (
        check_subspace_kkt,
        reduced_data,
        solve_drtr,
        solve_fdtr_steihaug,
        solve_radius_free,
        solve_subspace_step,
    )
except ImportError:
    # Fall back to absolute imports (when run directly)
    from core import PolicyOptimizationProblem, RandomStreams, SopoOptimizer, load_benchmark, policy_for_mdp
    from core.estimators import (
        HvpOperator,
        biased_mse_decomposition,
        estimator_samples,
        expected_havr_correction,
        fit_linear_baseline,
        gpomdp_gradient,
        havr_estimate,
        pairwise_batch_moment,
        trajectory_gradients,
        variance_report,
    )
    from core.mdp import BENCHMARKS, fixtures_dir, sample_batch, validate_mdp_file
    from core.oracles import (
        enumerate_trajectories,
        enumerated_objective,
        exact_gradient,
        exact_hessian,
        exact_objective,
        gradient_gap,
        state_marginals,
        truncation_bounds,
        value_gap,
    )
    from core.policy import finite_difference_score
    from core.trust_region import (
        check_subspace_kkt,
        reduced_data,
        solve_drtr,
        solve_fdtr_steihaug,
        solve_radius_free,
        solve_subspace_step,
    )


SUITE_SEED = 20240607

ESTIMATOR_HORIZON = 3
DRTR_INSTANCES = 1000
SUBSPACE_INSTANCES = 200
HAVR_PAIRS = 20
HAVR_MC_SAMPLES = 100_000
DRTR_GRID = (720, 80)
DRTR_GRID_REFINE = 41
MU_BENCHMARK = 1.0 / 500.0
TRUNCATION_HORIZONS = (5, 10, 20)
CORRUPT_FIXTURE = "corrupt_reward_bound.mdp"


@dataclass
class CheckOutcome:
    observed: float
    tolerance: float
    detail: str = ""
    passed: Optional[bool] = None


def polar_ellipse_points(G: np.ndarray, r: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Radius-major points α = L⁻ᵀ(r cos φ, r sin φ) with G = LLᵀ, so ‖α‖_G = r."""
    L = np.linalg.cholesky(G)
    y = (np.asarray(r)[:, None, None] * np.stack([np.cos(phi), np.sin(phi)], axis=1)[None, :, :]).reshape(-1, 2)
    return np.linalg.solve(L.T, y.T).T


def ellipse_grid(G: np.ndarray, delta: float, angles: int, radii: int) -> np.ndarray:
    """Points α with ‖α‖_G ≤ Δ on a polar grid of the G-ellipse, boundary included."""
    phi = np.linspace(0.0, 2.0 * np.pi, angles, endpoint=False)
    return polar_ellipse_points(G, np.linspace(0.0, delta, radii), phi)


def _model_values(model: TwoDimModel, points: np.ndarray) -> np.ndarray:
    return points @ model.c + 0.5 * np.einsum("ni,ij,nj->n", points, model.Q, points)


def grid_minimum(model: TwoDimModel, angles: int, radii: int,
                 extra: Optional[np.ndarray] = None, refine: int = 0) -> float:
    """
    Smallest model value over the polar grid (plus any extra points).

    With refine > 1 a refine×refine polar patch spanning one coarse cell
    either side of the coarse argmin is searched as well.
    """
    values = _model_values(model, ellipse_grid(model.G, model.delta, angles, radii))
    best = float(values.min())
    if refine > 1:
        i, j = divmod(int(values.argmin()), angles)
        dr = model.delta / max(radii - 1, 1)
        dphi = 2.0 * np.pi / angles
        r = np.clip(i * dr + np.linspace(-dr, dr, refine), 0.0, model.delta)
        phi = j * dphi + np.linspace(-dphi, dphi, refine)
        best = min(best, float(_model_values(model, polar_ellipse_points(model.G, r, phi)).min()))
    if extra is not None:
        best = min(best, float(_model_values(model, np.asarray(extra, dtype=float)).min()))
    return best


def random_drtr_model(rng: np.random.Generator, delta: float) -> TwoDimModel:
    Q = rng.uniform(-2.0, 2.0, size=(2, 2))
    A = rng.uniform(-1.0, 1.0, size=(2, 2))
    return TwoDimModel(Q=0.5 * (Q + Q.T), c=rng.uniform(-1.0, 1.0, size=2), G=A.T @ A + 1e-3 * np.eye(2),
                       delta=delta)


class OracleSuite:
    """Runs the oracle cross-checks of one scope and collects an OracleReport."""

    def __init__(self, seed: int = SUITE_SEED, logger: Optional[logging.Logger] = None):
        self.seed = seed
        self.logger = logger or logging.getLogger(f"{__name__}.{self.__class__.__name__}")
        self._drtr_cache: Optional[List[Tuple[TwoDimModel, object]]] = None

    def run(self, scope: str = "all") -> OracleReport:
        groups = {
            "solver": self.solver_checks,
            "estimators": self.estimator_checks,
            "mdp": self.mdp_checks,
        }
        if scope != "all" and scope not in groups:
            raise ValueError(f"Invalid oracle scope '{scope}'. Must be estimators, solver, mdp or all")
        selected = list(groups) if scope == "all" else [scope]

        report = OracleReport(scope=scope)
        for name in selected:
            self.logger.info(f"🔍 Running {name} oracle checks")
            for check_name, fn in groups[name]():
                report.checks.append(self._run_check(check_name, name, fn))
        status = "✅ all passed" if report.passed else f"❌ {len(report.failures)} failed"
        self.logger.info(f"Oracle suite ({scope}): {len(report.checks)} checks, {status}")
        return report

    def _run_check(self, name: str, scope: str, fn: Callable[[], CheckOutcome]) -> OracleCheckResult:
        start = time.perf_counter()
        try:
            outcome = fn()
        except Exception as e:
            elapsed = time.perf_counter() - start
            self.logger.error(f"Check {name} raised {type(e).__name__}: {e}")
            return OracleCheckResult(name=name, scope=scope, passed=False, observed=float("inf"),
                                     tolerance=0.0, detail=f"{type(e).__name__}: {e}", elapsed=elapsed)
        elapsed = time.perf_counter() - start
        observed = float(outcome.observed)
        passed = outcome.passed if outcome.passed is not None else bool(observed <= outcome.tolerance)
        log = self.logger.debug if passed else self.logger.warning
        log(f"{name}: observed {observed:.3e} vs tolerance {outcome.tolerance:.1e} ({elapsed:.2f}s)")
        return OracleCheckResult(name=name, scope=scope, passed=passed, observed=observed,
                                 tolerance=outcome.tolerance, detail=outcome.detail, elapsed=elapsed)

    def _rng(self, *keys: int) -> np.random.Generator:
        return RandomStreams(self.seed).generator(*keys)

    # --- solver ------------------------------------------------------------

    def solver_checks(self):
        return [
            ("drtr_grid_optimality", self.check_drtr_grid_optimality),
            ("drtr_kkt", self.check_drtr_kkt),
            ("drtr_reduction", self.check_drtr_reduction),
            ("drtr_indefinite_example", self.check_drtr_indefinite_example),
            ("reduced_data_dense", self.check_reduced_data_dense),
            ("subspace_kkt_equivalence", self.check_subspace_equivalence),
            ("radius_free_examples", self.check_radius_free_examples),
            ("steihaug_cauchy_decrease", self.check_steihaug_cauchy),
        ]

    def _drtr_instances(self):
        if self._drtr_cache is None:
            rng = self._rng(0, 0)
            deltas = (0.1, 1.0, 10.0)
            self._drtr_cache = []
            for i in range(DRTR_INSTANCES):
                model = random_drtr_model(rng, deltas[i % len(deltas)])
                self._drtr_cache.append((model, solve_drtr(model)))
        return self._drtr_cache

    def check_drtr_grid_optimality(self) -> CheckOutcome:
        worst = 0.0
        for model, solution in self._drtr_instances():
            gap = model.value(solution.alpha) - grid_minimum(model, *DRTR_GRID, refine=DRTR_GRID_REFINE)
            worst = max(worst, gap)
        angles, radii = DRTR_GRID
        return CheckOutcome(worst, 1e-5, (f"{DRTR_INSTANCES} random instances against a {angles}×{radii} ellipse grid, "
                                          f"refined {DRTR_GRID_REFINE}×{DRTR_GRID_REFINE} across the cells around its argmin"))

    def check_drtr_kkt(self) -> CheckOutcome:
        worst = 0.0
        for model, solution in self._drtr_instances():
            alpha, lam = solution.alpha, solution.lam
            stationarity = np.linalg.norm((model.Q + lam * model.G) @ alpha + model.c) / max(1.0, np.linalg.norm(model.c))
            norm = model.metric_norm(alpha)
            feasibility = max(0.0, norm - model.delta * (1 + 1e-9))
            complementarity = abs(lam * (model.delta - norm)) / max(1.0, lam * model.delta)
            dual = max(0.0, -float(np.linalg.eigvalsh(model.Q + lam * model.G)[0]) - 1e-9)
            worst = max(worst, stationarity, feasibility, complementarity, dual)
        return CheckOutcome(worst, 1e-8, "stationarity, feasibility, complementarity and Q + λG ⪰ 0")

    def check_drtr_reduction(self) -> CheckOutcome:
        worst = 0.0
        for model, solution in self._drtr_instances():
            bound = 0.5 * solution.lam * model.metric_norm(solution.alpha) ** 2
            worst = max(worst, bound - solution.predicted_reduction)
        return CheckOutcome(worst, 1e-10, "predicted reduction ≥ ½λ‖α‖²_G")

    def check_drtr_indefinite_example(self) -> CheckOutcome:
        model = TwoDimModel(Q=np.diag([1.0, -2.0]), c=[-1.0, -1.0], G=np.eye(2), delta=1.0)
        solution = solve_drtr(model)
        # The sweep along ±e₂ covers the hard-case direction of the negative eigenvalue
        sweep = np.array([[0.0, 1.0], [0.0, -1.0]])
        best = grid_minimum(model, angles=4000, radii=200, extra=sweep)
        gap = model.value(solution.alpha) - best
        observed = max(gap, 2.0 - solution.lam, 0.0 if solution.boundary else 1.0)
        return CheckOutcome(observed, 1e-5, f"α={np.round(solution.alpha, 6).tolist()} λ={solution.lam:.6f} "
                                            f"grid min {best:.6f}")

    def check_reduced_data_dense(self) -> CheckOutcome:
        rng = self._rng(0, 1)
        worst = 0.0
        for _ in range(50):
            A = rng.normal(size=(5, 5))
            M = 0.5 * (A + A.T)
            g, d = rng.normal(size=5), rng.normal(size=5)
            Q, c, G = reduced_data(g, d, M @ g, M @ d)
            B = np.column_stack([-g, d])
            dense = (B.T @ M @ B, B.T @ g, B.T @ B)
            scale = max(1.0, max(float(np.max(np.abs(x))) for x in dense))
            worst = max(worst, max(float(np.max(np.abs(a - b))) for a, b in zip((Q, c, G), dense)) / scale)
        return CheckOutcome(worst, 1e-12, "Q, c, G against BᵀMB, Bᵀg, BᵀB with B = [−g, d]")

    def check_subspace_equivalence(self) -> CheckOutcome:
        """Replay a basic DR-SOPO run and check each lifted step against the projected KKT system."""
        mdp = load_benchmark("bench3x2")
        policy = policy_for_mdp("tabular-softmax", mdp)
        problem = PolicyOptimizationProblem(mdp, policy, ESTIMATOR_HORIZON, exact=False)
        streams = RandomStreams(self.seed, (1,))
        schedule = ScheduleConfig(batch_grad=20, batch_hess=10, iterations=SUBSPACE_INSTANCES, delta=0.3)
        optimizer = SopoOptimizer("dr-sopo", problem, schedule=schedule, streams=streams, exact_eval=False)
        state = optimizer.initial_state(self._rng(1, 0).normal(scale=0.5, size=policy.dim))

        worst, checked = 0.0, 0
        for _ in range(SUBSPACE_INSTANCES):
            g = problem.gradient(state.theta, schedule.batch_grad,
                                 streams.generator(state.t, RandomStreams.GRADIENT)).g
            hessian = problem.hessian(state.theta, schedule.batch_hess,
                                      streams.generator(state.t, RandomStreams.HESSIAN))
            result = solve_subspace_step(g, state.d_prev, hessian, schedule.delta)
            report = check_subspace_kkt(result.step, result.solution.lam, g, state.d_prev, hessian, schedule.delta)
            worst = max(worst, report.max_residual())
            checked += not result.fallback
            state = optimizer.step(state).state
        return CheckOutcome(worst, 1e-8, f"{SUBSPACE_INSTANCES} optimizer iterates on bench3x2, "
                                         f"{checked} with a two-dimensional subspace")

    def check_radius_free_examples(self) -> CheckOutcome:
        cases = [
            (np.eye(2), np.array([-1.0, 0.0]), np.eye(2), 0.0, np.array([1.0, 0.0])),
            (np.diag([1.0, -2.0]), np.array([-1.0, -1.0]), np.eye(2), 2.0, np.array([0.2, 0.5])),
            (np.zeros((2, 2)), np.array([-2.0, 0.0]), np.eye(2), 1.0, np.array([1.0, 0.0])),
        ]
        worst = 0.0
        for Q, c, G, lam, expected in cases:
            worst = max(worst, float(np.max(np.abs(solve_radius_free(Q, c, G, lam) - expected))))
        return CheckOutcome(worst, 1e-10, f"{len(cases)} closed-form cases of (Q + 2λG)α = −c")

    def check_steihaug_cauchy(self) -> CheckOutcome:
        rng = self._rng(0, 2)
        worst = 0.0
        for i in range(100):
            n = 8
            A = rng.normal(size=(n, n))
            H = 0.5 * (A + A.T)
            if i % 2 == 0:
                H = H @ H.T / n + 0.1 * np.eye(n)
            g = rng.normal(size=n)
            delta = (0.5, 2.0)[i % 2]
            solution = solve_fdtr_steihaug(g, lambda v: H @ v, delta)
            model = float(g @ solution.d + 0.5 * solution.d @ H @ solution.d)
            worst = max(worst,
                        model - solution.cauchy_value,
                        abs(model - solution.model_value),
                        np.linalg.norm(solution.d) - delta * (1 + 1e-9))
        return CheckOutcome(worst, 1e-10, "m(d) ≤ m(Cauchy point) and ‖d‖ ≤ Δ on 100 random instances")

    # --- estimators --------------------------------------------------------

    def estimator_checks(self):
        return [
            ("gradient_unbiased", self.check_gradient_unbiased),
            ("pgt_equals_gpomdp", self.check_pgt_gpomdp),
            ("baseline_invariance", self.check_baseline_invariance),
            ("hessian_standard_unbiased", lambda: self.check_hessian_unbiased("standard")),
            ("hessian_vr_unbiased", lambda: self.check_hessian_unbiased("vr-uuT")),
            ("hessian_biased_offset", self.check_hessian_bias),
            ("havr_quadrature", self.check_havr_quadrature),
            ("havr_monte_carlo", self.check_havr_monte_carlo),
            ("variance_bounds", self.check_variance_bounds),
            ("batch_variance_scaling", self.check_batch_scaling),
            ("biased_mse_decomposition", self.check_mse_decomposition),
            ("score_finite_difference", self.check_score_fd),
            ("score_hvp_finite_difference", self.check_score_hvp_fd),
            ("fisher_identity", self.check_fisher_identity),
        ]

    def _bench(self):
        mdp = load_benchmark("bench3x2")
        return mdp, policy_for_mdp("tabular-softmax", mdp)

    def _thetas(self, stream: int, count: int = 3) -> List[np.ndarray]:
        _, policy = self._bench()
        rng = self._rng(2, stream)
        return [np.zeros(policy.dim)] + [rng.normal(scale=0.5, size=policy.dim) for _ in range(count)]

    def check_gradient_unbiased(self) -> CheckOutcome:
        mdp, policy = self._bench()
        worst = 0.0
        for theta in self._thetas(0):
            enumerated = exact_gradient(mdp, policy, theta, ESTIMATOR_HORIZON, method="enumeration")
            fd = exact_gradient(mdp, policy, theta, ESTIMATOR_HORIZON, method="fd")
            worst = max(worst, float(np.max(np.abs(enumerated - fd))))
        return CheckOutcome(worst, 1e-5, "enumeration mean of g(θ; τ) against finite differences of J")

    def check_pgt_gpomdp(self) -> CheckOutcome:
        mdp, policy = self._bench()
        theta = self._thetas(1)[1]
        law = enumerate_trajectories(mdp, policy, theta, ESTIMATOR_HORIZON)
        pgt = trajectory_gradients(law.states, law.actions, law.rewards, theta, policy, mdp.gamma)
        worst = max(float(np.max(np.abs(pgt[i] - gpomdp_gradient(law.trajectory(i), theta, policy, mdp.gamma))))
                    for i in range(law.size))
        return CheckOutcome(worst, 1e-12, f"pathwise over all {law.size} trajectories")

    def check_baseline_invariance(self) -> CheckOutcome:
        mdp, policy = self._bench()
        theta = self._thetas(2)[1]
        batch = sample_batch(mdp, policy, theta, ESTIMATOR_HORIZON, 200, self._rng(2, 10))
        baseline = fit_linear_baseline(batch, mdp.gamma, "state-time", n_states=mdp.n_states)
        law = enumerate_trajectories(mdp, policy, theta, ESTIMATOR_HORIZON)
        plain = law.probs @ trajectory_gradients(law.states, law.actions, law.rewards, theta, policy, mdp.gamma)
        shifted = law.probs @ trajectory_gradients(law.states, law.actions, law.rewards, theta, policy, mdp.gamma,
                                                   baseline)
        return CheckOutcome(float(np.max(np.abs(plain - shifted))), 1e-10,
                            "enumeration mean with and without a fitted state-time baseline")

    def check_hessian_unbiased(self, variant: str) -> CheckOutcome:
        mdp, policy = self._bench()
        worst = 0.0
        for theta in self._thetas(3):
            law = enumerate_trajectories(mdp, policy, theta, ESTIMATOR_HORIZON)
            operator = HvpOperator(law.states, law.actions, law.rewards, theta, policy, mdp.gamma,
                                   variant=variant, weights=law.probs, extended=True)
            fd = exact_hessian(mdp, policy, theta, ESTIMATOR_HORIZON, method="fd")
            worst = max(worst, float(np.max(np.abs(operator.matrix() - fd))))
        return CheckOutcome(worst, 1e-5, f"enumeration mean of the {variant} estimator against FD of ∇J")

    def check_hessian_bias(self) -> CheckOutcome:
        mdp, policy = self._bench()
        theta = self._thetas(3)[1]
        law = enumerate_trajectories(mdp, policy, theta, ESTIMATOR_HORIZON)
        operator = HvpOperator(law.states, law.actions, law.rewards, theta, policy, mdp.gamma, mu=MU_BENCHMARK,
                               weights=law.probs, extended=True)
        outer = np.einsum("n,ni,nj->ij", law.probs, operator.gradients, operator.score_sum)
        predicted = exact_hessian(mdp, policy, theta, ESTIMATOR_HORIZON, method="fd") + (MU_BENCHMARK - 1.0) * outer
        return CheckOutcome(float(np.max(np.abs(operator.matrix() - predicted))), 1e-5,
                            "μ = 1/500 mean equals ∇²J − (1 − μ)·E[g ∇log pᵀ]")

    def _havr_pairs(self):
        _, policy = self._bench()
        rng = self._rng(3, 0)
        pairs = []
        for _ in range(HAVR_PAIRS):
            theta_prev = rng.normal(scale=0.5, size=policy.dim)
            direction = rng.normal(size=policy.dim)
            v = direction / np.linalg.norm(direction) * 0.2 * rng.uniform(0.1, 1.0)
            pairs.append((theta_prev, theta_prev + v))
        return pairs

    def check_havr_quadrature(self) -> CheckOutcome:
        mdp, policy = self._bench()
        worst = 0.0
        for theta_prev, theta_curr in self._havr_pairs():
            xi = expected_havr_correction(theta_prev, theta_curr, policy, mdp, ESTIMATOR_HORIZON, mdp.gamma)
            target = (exact_gradient(mdp, policy, theta_curr, ESTIMATOR_HORIZON)
                      - exact_gradient(mdp, policy, theta_prev, ESTIMATOR_HORIZON))
            worst = max(worst, float(np.max(np.abs(xi - target))))
        return CheckOutcome(worst, 1e-6, f"{HAVR_PAIRS} pairs with ‖v‖ ≤ 0.2, 32-node Gauss–Legendre")

    def check_havr_monte_carlo(self) -> CheckOutcome:
        mdp, policy = self._bench()
        theta_prev, theta_curr = self._havr_pairs()[0]
        target = expected_havr_correction(theta_prev, theta_curr, policy, mdp, ESTIMATOR_HORIZON, mdp.gamma)
        estimate = havr_estimate(theta_prev, theta_curr, policy, mdp, ESTIMATOR_HORIZON, mdp.gamma,
                                 HAVR_MC_SAMPLES, self._rng(3, 1))
        n = estimate.n_trajectories
        trace_cov = max(estimate.sum_sq_norm / n - float(estimate.g @ estimate.g), 0.0)
        sigma = math.sqrt(trace_cov / n)
        distance = float(np.linalg.norm(estimate.g - target))
        return CheckOutcome(distance, 4.0 * sigma, f"{n} samples, σ = {sigma:.3e}")

    def check_variance_bounds(self) -> CheckOutcome:
        mdp, policy = self._bench()
        worst = 0.0
        reports = []
        for theta in self._thetas(4):
            for estimator in ("gradient", "hessian", "hessian-vr"):
                report = variance_report(estimator, theta, mdp, policy, H=ESTIMATOR_HORIZON)
                worst = max(worst, report.moment / report.bound)
                reports.append(f"{estimator}={report.moment:.3g}/{report.bound:.3g}")
        return CheckOutcome(worst, 1.0, "moment/bound ratios; " + ", ".join(reports[:3]))

    def check_batch_scaling(self) -> CheckOutcome:
        mdp, policy = self._bench()
        theta = self._thetas(5)[1]
        law = enumerate_trajectories(mdp, policy, theta, ESTIMATOR_HORIZON)
        worst = 0.0
        for estimator in ("gradient", "hessian"):
            values = estimator_samples(estimator, theta, policy, mdp.gamma, law.states, law.actions, law.rewards)
            single = variance_report(estimator, theta, mdp, policy, H=ESTIMATOR_HORIZON)
            pair = pairwise_batch_moment(values, law.probs)
            worst = max(worst, abs(pair - single.moment / 2.0) / max(single.moment, 1e-300))
        return CheckOutcome(worst, 1e-10, "exact moment of a two-sample mean equals half the single moment")

    def check_mse_decomposition(self) -> CheckOutcome:
        mdp, policy = self._bench()
        rows = biased_mse_decomposition(mdp, policy, self._thetas(6)[1], ESTIMATOR_HORIZON)
        worst = max(abs(row["mse"] - row["decomposed"]) for row in rows)
        return CheckOutcome(worst, 1e-8, "μ ∈ {0, ¼, ½, ¾, 1}")

    def _policy_draws(self, stream: int, count: int = 100):
        mdp, policy = self._bench()
        rng = self._rng(4, stream)
        for _ in range(count):
            yield (rng.normal(size=policy.dim), int(rng.integers(mdp.n_states)), int(rng.integers(mdp.n_actions)),
                   rng.normal(size=policy.dim))

    def check_score_fd(self) -> CheckOutcome:
        _, policy = self._bench()
        worst = max(float(np.max(np.abs(policy.score(theta, s, a) - finite_difference_score(policy, theta, s, a))))
                    for theta, s, a, _ in self._policy_draws(0))
        return CheckOutcome(worst, 1e-7, "100 seeded (θ, s, a) draws")

    def check_score_hvp_fd(self) -> CheckOutcome:
        _, policy = self._bench()
        step = 1e-5
        worst = 0.0
        for theta, s, a, v in self._policy_draws(1):
            fd = (policy.score(theta + step * v, s, a) - policy.score(theta - step * v, s, a)) / (2 * step)
            worst = max(worst, float(np.max(np.abs(policy.score_hvp(theta, s, a, v) - fd))))
        return CheckOutcome(worst, 1e-6, "100 seeded (θ, s, a, v) draws")

    def check_fisher_identity(self) -> CheckOutcome:
        mdp, policy = self._bench()
        worst = max(policy.fisher_identity_gap(theta, s)
                    for theta, _, _, _ in self._policy_draws(2, 20) for s in range(mdp.n_states))
        return CheckOutcome(worst, 1e-10, "E[score scoreᵀ] + E[∇² log π] per state")

    # --- mdp ---------------------------------------------------------------

    def mdp_checks(self):
        return [
            ("objective_dp_vs_enumeration", self.check_objective_dual),
            ("gradient_fd_vs_enumeration", self.check_gradient_dual),
            ("hessian_symmetry", self.check_hessian_symmetry),
            ("sampled_state_marginals", self.check_sampled_marginals),
            ("truncation_bounds", self.check_truncation_bounds),
            ("fixtures_valid", self.check_fixtures_valid),
            ("fixture_negative_control", self.check_negative_control),
        ]

    def check_objective_dual(self) -> CheckOutcome:
        mdp, policy = self._bench()
        worst = max(abs(exact_objective(mdp, policy, theta, ESTIMATOR_HORIZON)
                        - enumerated_objective(mdp, policy, theta, ESTIMATOR_HORIZON))
                    for theta in self._thetas(7))
        return CheckOutcome(worst, 1e-12, "forward DP against trajectory enumeration")

    def check_gradient_dual(self) -> CheckOutcome:
        mdp, policy = self._bench()
        worst = 0.0
        for theta in self._thetas(8):
            fd = exact_gradient(mdp, policy, theta, ESTIMATOR_HORIZON, method="fd")
            for method in ("enumeration", "dp"):
                other = exact_gradient(mdp, policy, theta, ESTIMATOR_HORIZON, method=method)
                worst = max(worst, float(np.max(np.abs(fd - other))))
        return CheckOutcome(worst, 1e-6, "finite differences against enumeration and DP")

    def check_hessian_symmetry(self) -> CheckOutcome:
        mdp, policy = self._bench()
        theta = self._thetas(9)[1]
        law = enumerate_trajectories(mdp, policy, theta, ESTIMATOR_HORIZON)
        raw = HvpOperator(law.states, law.actions, law.rewards, theta, policy, mdp.gamma,
                          weights=law.probs, extended=True).matrix()
        return CheckOutcome(float(np.max(np.abs(raw - raw.T))), 1e-8, "unsymmetrized enumeration Hessian")

    def check_sampled_marginals(self) -> CheckOutcome:
        mdp, policy = self._bench()
        theta = self._thetas(10)[1]
        n = 20_000
        batch = sample_batch(mdp, policy, theta, ESTIMATOR_HORIZON, n, self._rng(5, 0))
        final_states = np.array([traj.states[-1] for traj in batch])
        expected = state_marginals(mdp, policy, theta, ESTIMATOR_HORIZON)[-1] * n
        counts = np.bincount(final_states, minlength=mdp.n_states)
        p_value = float(stats.chisquare(counts, expected).pvalue)
        return CheckOutcome(p_value, 0.001, f"chi-square over the final state of {n} rollouts",
                            passed=p_value > 0.001)

    def check_truncation_bounds(self) -> CheckOutcome:
        mdp = load_benchmark("bench5x3")
        policy = policy_for_mdp("tabular-softmax", mdp)
        G, L = policy.policy_constants(mdp)
        theta = self._rng(6, 0).normal(scale=0.5, size=policy.dim)
        worst = 0.0
        for H in TRUNCATION_HORIZONS:
            value_bound, grad_bound, _ = truncation_bounds(mdp.reward_bound, mdp.gamma, H, G, L)
            worst = max(worst,
                        value_gap(mdp, policy, theta, H) / value_bound,
                        gradient_gap(mdp, policy, theta, H) / grad_bound)
        return CheckOutcome(worst, 1.0, f"bench5x3, H ∈ {TRUNCATION_HORIZONS}; gap/bound ratios")

    def check_fixtures_valid(self) -> CheckOutcome:
        problems = {name: validate_mdp_file(fixtures_dir() / filename) for name, filename in BENCHMARKS.items()}
        bad = {name: issues for name, issues in problems.items() if issues}
        return CheckOutcome(float(len(bad)), 0.0, "; ".join(f"{k}: {v}" for k, v in bad.items()) or "all valid")

    def check_negative_control(self) -> CheckOutcome:
        issues = validate_mdp_file(fixtures_dir() / CORRUPT_FIXTURE)
        return CheckOutcome(0.0 if issues else 1.0, 0.0,
                            "; ".join(issues) if issues else "corrupt fixture was accepted")


def run_oracle_suite(scope: str = "all", seed: int = SUITE_SEED,
                     logger: Optional[logging.Logger] = None) -> OracleReport:
    """Run the oracle checks of a scope (solver, estimators, mdp or all)."""
    return OracleSuite(seed=seed, logger=logger).run(scope)
