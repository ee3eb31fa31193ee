"""
Stochastic second-order policy optimizers and their first-order baselines.

Every scheme is a step function (state, problem, config, streams) -> StepOutcome
driven by SopoOptimizer.run. A StochasticProblem supplies the sampled
quantities a step needs (gradient batches, frozen Hessian-action batches,
Hessian-aided corrections and return estimates), so the same steps run on
tabular MDPs, on enumeration-exact oracles and on deterministic closures.

Batches are drawn from RandomStreams keyed by (iteration, purpose). Two
algorithms that ask for the same batch at the same iteration therefore
see the same trajectories.
"""

import json
import logging
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from models import (
    CostEstimate,
    GradEstimate,
    OptimizerState,
    PracticalConfig,
    RunResult,
    ScheduleConfig,
    TabularMDP,
    TraceRecord,
)
from .config import Config
from .constants import ZERO_REDUCTION_TOL
from .errors import DegenerateBaseline, IndefiniteSystem, NoConvergence, TooLarge, Unsupported, ZeroReduction
from .estimators import (
    HvpOperator,
    batch_cost,
    batch_gradient,
    expected_havr_correction,
    fit_linear_baseline,
    havr_estimate,
)
from .mdp import sample_batch
from .oracles import enumerate_trajectories, exact_gradient, exact_objective
from .policy import Policy
from .trust_region import (
    is_degenerate,
    lift_direction,
    reduced_data,
    solve_fdtr_steihaug,
    solve_radius_free,
    solve_subspace_step,
)
from .utils import RandomStreams


logger = logging.getLogger(__name__)


@dataclass
class HessianSample:
    """A frozen Hessian-action operator with the cost of the batch behind it."""
    operator: Callable[[np.ndarray], np.ndarray]
    n_trajectories: int
    mean_cost: float
    env_steps: int

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.operator(v)


class StochasticProblem(ABC):
    """Sampled first- and second-order information about an objective J to minimize."""

    @abstractmethod
    def gradient(self, theta: np.ndarray, n: int, rng: np.random.Generator) -> GradEstimate:
        """Batch gradient estimate at θ from n trajectories."""

    @abstractmethod
    def hessian(self, theta: np.ndarray, n: int, rng: np.random.Generator, mu: float = 1.0,
                variant: str = "standard") -> HessianSample:
        """Frozen batch Hessian action at θ."""

    @abstractmethod
    def havr(self, theta_prev: np.ndarray, theta_curr: np.ndarray, m: int, rng: np.random.Generator,
             mu: float = 1.0, variant: str = "standard") -> GradEstimate:
        """Hessian-aided estimate of ∇J(θ_curr) − ∇J(θ_prev)."""

    @abstractmethod
    def objective(self, theta: np.ndarray, n: int, rng: np.random.Generator) -> CostEstimate:
        """Mean return of n fresh trajectories at θ."""

    def exact_gradient(self, theta: np.ndarray) -> Optional[np.ndarray]:
        return None

    def exact_objective(self, theta: np.ndarray) -> Optional[float]:
        return None


class PolicyOptimizationProblem(StochasticProblem):
    """
    Truncated-horizon cost minimization of a parametric policy on a tabular MDP.

    With a baseline feature map, every gradient batch uses the linear baseline
    fitted on the previous gradient batch and then refits it.
    """

    def __init__(self, mdp: TabularMDP, policy: Policy, H: int, baseline: Optional[str] = None,
                 workers: int = 1, exact: bool = True):
        self.mdp = mdp
        self.policy = policy
        self.H = H
        self.gamma = mdp.gamma
        self.baseline_features = baseline
        self.baseline = None
        self.workers = workers
        self.exact = exact
        self.logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    @property
    def dim(self) -> int:
        return self.policy.dim

    def _sample(self, theta: np.ndarray, n: int, rng: np.random.Generator):
        return sample_batch(self.mdp, self.policy, theta, self.H, n, rng, workers=self.workers)

    def gradient(self, theta, n, rng):
        batch = self._sample(theta, n, rng)
        estimate = batch_gradient(batch, theta, self.policy, self.gamma, self.baseline)
        if self.baseline_features is not None:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", DegenerateBaseline)
                self.baseline = fit_linear_baseline(batch, self.gamma, self.baseline_features,
                                                    n_states=self.mdp.n_states)
            if caught:
                self.logger.debug(f"Baseline refit needed a ridge: {caught[0].message}")
        return estimate

    def hessian(self, theta, n, rng, mu=1.0, variant="standard"):
        batch = self._sample(theta, n, rng)
        cost = batch_cost(batch, self.gamma)
        operator = HvpOperator.from_trajectories(batch, theta, self.policy, self.gamma, mu, variant)
        return HessianSample(operator, n, cost.value, cost.env_steps)

    def havr(self, theta_prev, theta_curr, m, rng, mu=1.0, variant="standard"):
        return havr_estimate(theta_prev, theta_curr, self.policy, self.mdp, self.H, self.gamma, m, rng,
                             mu, variant)

    def objective(self, theta, n, rng):
        return batch_cost(self._sample(theta, n, rng), self.gamma)

    def exact_gradient(self, theta):
        if not self.exact:
            return None
        try:
            return exact_gradient(self.mdp, self.policy, theta, self.H)
        except (Unsupported, TooLarge):
            return None

    def exact_objective(self, theta):
        if not self.exact:
            return None
        try:
            return exact_objective(self.mdp, self.policy, theta, self.H)
        except (Unsupported, TooLarge):
            return None


class EnumerationProblem(PolicyOptimizationProblem):
    """
    The same policy problem with every batch replaced by its exact expectation.

    Gradients come from dynamic programming, Hessian actions from trajectory
    enumeration, and Hessian-aided corrections from quadrature over the
    enumerated law. Batch sizes and generators are accepted and ignored.
    """

    def gradient(self, theta, n, rng):
        cost = exact_objective(self.mdp, self.policy, theta, self.H)
        return GradEstimate(g=exact_gradient(self.mdp, self.policy, theta, self.H), n_trajectories=1,
                            mean_cost=cost)

    def hessian(self, theta, n, rng, mu=1.0, variant="standard"):
        law = enumerate_trajectories(self.mdp, self.policy, theta, self.H)
        operator = HvpOperator(law.states, law.actions, law.rewards, theta, self.policy, self.gamma,
                               mu=mu, variant=variant, weights=law.probs, extended=True)
        return HessianSample(operator, 1, exact_objective(self.mdp, self.policy, theta, self.H), 0)

    def havr(self, theta_prev, theta_curr, m, rng, mu=1.0, variant="standard"):
        xi = expected_havr_correction(theta_prev, theta_curr, self.policy, self.mdp, self.H, self.gamma,
                                      variant=variant)
        return GradEstimate(g=xi, n_trajectories=1)

    def objective(self, theta, n, rng):
        return CostEstimate(value=exact_objective(self.mdp, self.policy, theta, self.H), n_trajectories=1)


class DeterministicProblem(StochasticProblem):
    """
    Exact closures f, ∇f and ∇²f·v standing in for the sampled estimators.

    The Hessian-aided correction integrates ∇²f(θ(a))·v over a ∈ [0, 1] by
    Gauss–Legendre quadrature, which telescopes to ∇f(θ_curr) − ∇f(θ_prev).
    """

    def __init__(self, f: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray],
                 hvp: Callable[[np.ndarray, np.ndarray], np.ndarray], nodes: int = Config.QUADRATURE_NODES):
        self.f = f
        self.grad = grad
        self.hvp = hvp
        self.nodes = nodes

    def gradient(self, theta, n, rng):
        return GradEstimate(g=self.grad(theta), n_trajectories=1, mean_cost=float(self.f(theta)))

    def hessian(self, theta, n, rng, mu=1.0, variant="standard"):
        theta = np.array(theta, dtype=float)
        return HessianSample(lambda v: np.asarray(self.hvp(theta, v), dtype=float), 1, float(self.f(theta)), 0)

    def havr(self, theta_prev, theta_curr, m, rng, mu=1.0, variant="standard"):
        theta_prev = np.asarray(theta_prev, dtype=float)
        theta_curr = np.asarray(theta_curr, dtype=float)
        v = theta_curr - theta_prev
        x, w = leggauss(self.nodes)
        xi = np.zeros_like(v)
        for a, weight in zip(0.5 * (x + 1.0), 0.5 * w):
            xi += weight * np.asarray(self.hvp(a * theta_curr + (1.0 - a) * theta_prev, v), dtype=float)
        return GradEstimate(g=xi, n_trajectories=1)

    def objective(self, theta, n, rng):
        return CostEstimate(value=float(self.f(theta)), n_trajectories=1)

    def exact_gradient(self, theta):
        return np.asarray(self.grad(theta), dtype=float)

    def exact_objective(self, theta):
        return float(self.f(theta))


@dataclass
class StepOutcome:
    """New state and the trace record of one iteration."""
    state: OptimizerState
    record: TraceRecord
    step: np.ndarray


@dataclass
class _GradientPhase:
    g: np.ndarray
    env_steps: int
    mean_cost: Optional[float]
    n_trajectories: int


def _batch_gradient(state: OptimizerState, problem: StochasticProblem, batch: int,
                    streams: RandomStreams) -> _GradientPhase:
    estimate = problem.gradient(state.theta, batch, streams.generator(state.t, RandomStreams.GRADIENT))
    return _GradientPhase(estimate.g, estimate.env_steps, estimate.mean_cost, estimate.n_trajectories)


def _recursive_gradient(state: OptimizerState, problem: StochasticProblem, batch_0: int, batch_havr: int,
                        q: int, mu: float, variant: str, streams: RandomStreams) -> _GradientPhase:
    """Fresh batch at the start of an epoch, g_{t−1} + ξ_t inside it."""
    if state.epoch_pos == 0:
        return _batch_gradient(state, problem, batch_0, streams)
    correction = problem.havr(state.theta - state.last_move, state.theta, batch_havr,
                              streams.generator(state.t, RandomStreams.HAVR), mu, variant)
    return _GradientPhase(state.g_est + correction.g, correction.env_steps, None, 0)


def _advance(state: OptimizerState, step: np.ndarray, g: np.ndarray, env_steps: int, q: int,
             accepted: bool = True, **updates) -> OptimizerState:
    moved = step if accepted else np.zeros_like(step)
    data = {
        "theta": state.theta + moved,
        "d_prev": step if accepted else state.d_prev,
        "last_move": moved,
        "g_est": g,
        "t": state.t + 1,
        "epoch_pos": (state.t + 1) % q,
        "lam": state.lam,
        "delta": state.delta,
        "cumulative_env_steps": state.cumulative_env_steps + env_steps,
    }
    data.update(updates)
    return OptimizerState(**data)


def _mean_return(phase: _GradientPhase, hessian: Optional[HessianSample], fallback: float) -> float:
    if phase.mean_cost is not None:
        return -phase.mean_cost
    if hessian is not None:
        return -hessian.mean_cost
    return fallback


def _record(state: OptimizerState, new_state: OptimizerState, problem: StochasticProblem, g: np.ndarray,
            mean_return: float, exact_eval: bool, **fields) -> TraceRecord:
    exact = problem.exact_gradient(state.theta) if exact_eval else None
    return TraceRecord(
        t=new_state.t,
        env_steps=new_state.cumulative_env_steps,
        mean_return=mean_return,
        grad_norm=float(np.linalg.norm(g)),
        exact_grad_norm=None if exact is None else float(np.linalg.norm(exact)),
        **fields,
    )


def _subspace_step(state: OptimizerState, problem: StochasticProblem, schedule: ScheduleConfig,
                   streams: RandomStreams, phase: _GradientPhase, q: int, exact_eval: bool,
                   log: logging.Logger) -> StepOutcome:
    hessian = problem.hessian(state.theta, schedule.batch_hess, streams.generator(state.t, RandomStreams.HESSIAN),
                              schedule.mu, schedule.hvp_variant)
    delta = state.delta or schedule.delta
    for attempt in range(Config.NO_CONVERGENCE_RETRIES + 1):
        try:
            result = solve_subspace_step(phase.g, state.d_prev, hessian, delta)
            break
        except NoConvergence as e:
            if attempt == Config.NO_CONVERGENCE_RETRIES:
                log.error(f"Subspace solve failed at t={state.t} even with Δ={delta:g}: {e}")
                raise
            delta *= 0.5
            log.warning(f"Subspace solve did not converge at t={state.t}; retrying with Δ={delta:g}")

    env_steps = phase.env_steps + hessian.env_steps
    # a zero step leaves d_prev in place
    new_state = _advance(state, result.step, phase.g, env_steps, q, accepted=bool(np.any(result.step)),
                         delta=state.delta or schedule.delta)
    record = _record(state, new_state, problem, phase.g, _mean_return(phase, hessian, 0.0), exact_eval,
                     lam=result.solution.lam, min_eig=result.solution.min_pencil_eig)
    log.debug(f"t={state.t} ‖g‖={record.grad_norm:.4g} λ={result.solution.lam:.4g} "
              f"‖step‖={np.linalg.norm(result.step):.4g} fallback={result.fallback}")
    return StepOutcome(new_state, record, result.step)


def drsopo_step(state: OptimizerState, problem: StochasticProblem, schedule: ScheduleConfig,
                streams: RandomStreams, exact_eval: bool = False,
                log: Optional[logging.Logger] = None) -> StepOutcome:
    """One basic DR-SOPO iteration: fresh gradient batch, subspace solve at fixed Δ."""
    phase = _batch_gradient(state, problem, schedule.batch_grad, streams)
    return _subspace_step(state, problem, schedule, streams, phase, 1, exact_eval, log or logger)


def dvrsopo_step(state: OptimizerState, problem: StochasticProblem, schedule: ScheduleConfig,
                 streams: RandomStreams, exact_eval: bool = False,
                 log: Optional[logging.Logger] = None) -> StepOutcome:
    """One basic DVR-SOPO iteration: Hessian-aided gradient recursion, subspace solve at fixed Δ."""
    phase = _recursive_gradient(state, problem, schedule.batch_0, schedule.batch_havr, schedule.q,
                                schedule.mu, schedule.hvp_variant, streams)
    return _subspace_step(state, problem, schedule, streams, phase, schedule.q, exact_eval, log or logger)


def _radius_free_alpha(Q: np.ndarray, c: np.ndarray, G: np.ndarray, lam: float, cfg: PracticalConfig,
                       log: logging.Logger):
    """Solve the radius-free problem, growing λ until Q + 2λG is positive definite."""
    for _ in range(Config.LAMBDA_BUMP_LIMIT):
        try:
            return solve_radius_free(Q, c, G, lam), lam
        except IndefiniteSystem:
            bumped = max(lam, cfg.lambda_min) * cfg.lambda_inc
            log.warning(f"Radius-free system indefinite at λ={lam:.4g}; raising to {bumped:.4g}")
            lam = bumped
    raise NoConvergence(f"Q + 2λG stayed indefinite after {Config.LAMBDA_BUMP_LIMIT} increases of λ")


def practical_step(state: OptimizerState, problem: StochasticProblem, cfg: PracticalConfig,
                   streams: RandomStreams, variant: str = "dr", exact_eval: bool = False,
                   log: Optional[logging.Logger] = None) -> StepOutcome:
    """
    One radius-free iteration with ratio-based acceptance.

    The step solves (Q + 2λG)α = −c, clips ‖α‖ to Δ_max, and is accepted when
    the observed decrease over the predicted one exceeds η. Rejections keep θ
    and d_prev and grow λ; acceptances shrink it.
    """
    log = log or logger
    if variant == "dr":
        q = 1
        phase = _batch_gradient(state, problem, cfg.batch_grad, streams)
    elif variant == "dvr":
        q = cfg.q
        phase = _recursive_gradient(state, problem, cfg.batch_0, cfg.batch_havr, cfg.q, cfg.mu,
                                    cfg.hvp_variant, streams)
    else:
        raise ValueError(f"Invalid practical variant '{variant}'. Must be dr or dvr")

    g = phase.g
    hessian = problem.hessian(state.theta, cfg.batch_hess, streams.generator(state.t, RandomStreams.HESSIAN),
                              cfg.mu, cfg.hvp_variant)
    env_steps = phase.env_steps + hessian.env_steps
    mean_return = _mean_return(phase, hessian, 0.0)
    g_sq = float(g @ g)
    if g_sq == 0.0:
        new_state = _advance(state, np.zeros_like(g), g, env_steps, q, accepted=False)
        record = _record(state, new_state, problem, g, mean_return, exact_eval, lam=state.lam)
        return StepOutcome(new_state, record, np.zeros_like(g))

    if is_degenerate(g, state.d_prev):
        Q, c, G = np.array([[g @ hessian(g)]]), np.array([-g_sq]), np.array([[g_sq]])
        basis_d = np.zeros_like(g)
    else:
        Q, c, G = reduced_data(g, state.d_prev, hessian(g), hessian(state.d_prev))
        basis_d = state.d_prev
    min_eig = float(linalg.eigh(Q, G, eigvals_only=True)[0])

    alpha, lam = _radius_free_alpha(Q, c, G, state.lam, cfg, log)
    alpha_norm = float(np.linalg.norm(alpha))
    if alpha_norm > cfg.delta_max:
        alpha = alpha * (cfg.delta_max / alpha_norm)
    predicted = -float(c @ alpha + 0.5 * alpha @ Q @ alpha)
    alpha = np.pad(alpha, (0, 2 - alpha.shape[0]))
    step = lift_direction(alpha, g, basis_d)

    rho = None
    try:
        if predicted <= ZERO_REDUCTION_TOL:
            raise ZeroReduction(f"Predicted reduction {predicted:.3e} at t={state.t}")
        if phase.mean_cost is not None:
            current_cost, n_ratio = phase.mean_cost, phase.n_trajectories
        else:
            current_cost, n_ratio = hessian.mean_cost, hessian.n_trajectories
        candidate = problem.objective(state.theta + step, n_ratio,
                                      streams.generator(state.t, RandomStreams.RATIO))
        env_steps += candidate.env_steps
        rho = (current_cost - candidate.value) / predicted
        accepted = rho > cfg.eta
    except ZeroReduction as e:
        log.debug(f"{e}; treating as a rejection")
        accepted = False

    if accepted:
        new_lam = max(lam / cfg.lambda_dec, cfg.lambda_min)
    else:
        new_lam = lam * cfg.lambda_inc if lam > 0 else cfg.lambda_min * cfg.lambda_inc
    new_state = _advance(state, step, g, env_steps, q, accepted=accepted, lam=new_lam)
    record = _record(state, new_state, problem, g, mean_return, exact_eval,
                     lam=lam, rho=rho, accepted=accepted, min_eig=min_eig)
    log.debug(f"t={state.t} ρ={rho} accepted={accepted} λ: {lam:.4g} -> {new_lam:.4g}")
    return StepOutcome(new_state, record, step)


def fdtr_step(state: OptimizerState, problem: StochasticProblem, schedule: ScheduleConfig,
              streams: RandomStreams, vr: bool = False, exact_eval: bool = False,
              log: Optional[logging.Logger] = None) -> StepOutcome:
    """Full-dimension trust-region iteration solved by Steihaug-CG on the frozen Hessian batch."""
    log = log or logger
    if vr:
        q = schedule.q
        phase = _recursive_gradient(state, problem, schedule.batch_0, schedule.batch_havr, q, schedule.mu,
                                    schedule.hvp_variant, streams)
    else:
        q = 1
        phase = _batch_gradient(state, problem, schedule.batch_grad, streams)
    hessian = problem.hessian(state.theta, schedule.batch_hess, streams.generator(state.t, RandomStreams.HESSIAN),
                              schedule.mu, schedule.hvp_variant)
    delta = state.delta or schedule.delta
    solution = solve_fdtr_steihaug(phase.g, hessian, delta, tol=schedule.steihaug_tol)
    new_state = _advance(state, solution.d, phase.g, phase.env_steps + hessian.env_steps, q, delta=delta)
    record = _record(state, new_state, problem, phase.g, _mean_return(phase, hessian, 0.0), exact_eval,
                     lam=solution.lambda_hat)
    log.debug(f"t={state.t} Steihaug {solution.termination} in {solution.cg_iterations} iterations")
    return StepOutcome(new_state, record, solution.d)


def _normalized_step(state: OptimizerState, problem: StochasticProblem, phase: _GradientPhase, lr: float,
                     q: int, exact_eval: bool) -> StepOutcome:
    norm = float(np.linalg.norm(phase.g))
    step = np.zeros_like(phase.g) if norm == 0.0 else -lr * phase.g / norm
    new_state = _advance(state, step, phase.g, phase.env_steps, q)
    record = _record(state, new_state, problem, phase.g, _mean_return(phase, None, 0.0), exact_eval)
    return StepOutcome(new_state, record, step)


def reinforce_step(state: OptimizerState, problem: StochasticProblem, schedule: ScheduleConfig,
                   streams: RandomStreams, exact_eval: bool = False) -> StepOutcome:
    """θ − lr·g/‖g‖ with a fresh gradient batch."""
    phase = _batch_gradient(state, problem, schedule.batch_grad, streams)
    return _normalized_step(state, problem, phase, schedule.learning_rate, 1, exact_eval)


def hapg_step(state: OptimizerState, problem: StochasticProblem, schedule: ScheduleConfig,
              streams: RandomStreams, exact_eval: bool = False) -> StepOutcome:
    """Normalized step on the Hessian-aided recursive gradient."""
    phase = _recursive_gradient(state, problem, schedule.batch_0, schedule.batch_havr, schedule.q, schedule.mu,
                                schedule.hvp_variant, streams)
    return _normalized_step(state, problem, phase, schedule.learning_rate, schedule.q, exact_eval)


class SopoOptimizer:
    """
    Runs one algorithm from an initial θ and collects its trace.

    The trace opens with a t=0 record evaluated on a separate batch; every
    iteration then appends one record. A run stops after the iteration
    budget or once the environment-step budget is spent.
    """

    def __init__(self, algorithm: str, problem: StochasticProblem, schedule: Optional[ScheduleConfig] = None,
                 practical: Optional[PracticalConfig] = None, seed: int = 0,
                 streams: Optional[RandomStreams] = None, env_step_budget: int = 0, exact_eval: bool = True,
                 logger: Optional[logging.Logger] = None):
        self.algorithm = Config.validate_algorithm(algorithm)
        self.problem = problem
        self.schedule = schedule or ScheduleConfig()
        self.practical = practical
        if practical is not None and algorithm not in ("dr-sopo", "dvr-sopo"):
            raise ValueError(f"Practical mode is only defined for dr-sopo and dvr-sopo, not '{algorithm}'")
        self.streams = streams or RandomStreams(seed)
        self.env_step_budget = env_step_budget
        self.exact_eval = exact_eval
        self.logger = logger or logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    @property
    def iterations(self) -> int:
        return self.practical.iterations if self.practical is not None else self.schedule.iterations

    def initial_state(self, theta0: np.ndarray) -> OptimizerState:
        if self.practical is not None:
            return OptimizerState.initial(theta0, lam=self.practical.lambda_init)
        return OptimizerState.initial(theta0, delta=self.schedule.delta)

    def step(self, state: OptimizerState) -> StepOutcome:
        kwargs = {"exact_eval": self.exact_eval}
        if self.practical is not None:
            variant = "dr" if self.algorithm == "dr-sopo" else "dvr"
            return practical_step(state, self.problem, self.practical, self.streams, variant, log=self.logger,
                                  **kwargs)
        if self.algorithm == "dr-sopo":
            return drsopo_step(state, self.problem, self.schedule, self.streams, log=self.logger, **kwargs)
        if self.algorithm == "dvr-sopo":
            return dvrsopo_step(state, self.problem, self.schedule, self.streams, log=self.logger, **kwargs)
        if self.algorithm == "fdtr-sopo":
            return fdtr_step(state, self.problem, self.schedule, self.streams, vr=False, log=self.logger, **kwargs)
        if self.algorithm == "fdtr-vrsopo":
            return fdtr_step(state, self.problem, self.schedule, self.streams, vr=True, log=self.logger, **kwargs)
        if self.algorithm == "reinforce":
            return reinforce_step(state, self.problem, self.schedule, self.streams, **kwargs)
        return hapg_step(state, self.problem, self.schedule, self.streams, **kwargs)

    def evaluate(self, state: OptimizerState) -> TraceRecord:
        """t=0 record from an evaluation batch that is not charged to the budget."""
        batch = self.practical.batch_grad if self.practical is not None else self.schedule.batch_grad
        estimate = self.problem.gradient(state.theta, batch, self.streams.generator(0, RandomStreams.EVALUATION))
        exact = self.problem.exact_gradient(state.theta) if self.exact_eval else None
        return TraceRecord(
            t=state.t,
            env_steps=state.cumulative_env_steps,
            mean_return=-estimate.mean_cost,
            grad_norm=float(np.linalg.norm(estimate.g)),
            exact_grad_norm=None if exact is None else float(np.linalg.norm(exact)),
            lam=state.lam if self.practical is not None else None,
        )

    def run(self, theta0: Optional[np.ndarray] = None, state: Optional[OptimizerState] = None,
            checkpoint: Optional[Union[str, Path]] = None) -> RunResult:
        """Iterate until a budget is exhausted; resume from `state` when given."""
        if state is None:
            if theta0 is None:
                raise ValueError("Either theta0 or a resume state is required")
            state = self.initial_state(theta0)
        mode = "practical" if self.practical is not None else "basic"
        self.logger.info(f"🚀 Running {self.algorithm} ({mode}) for up to {self.iterations} iterations "
                         f"from t={state.t}")

        trace: List[TraceRecord] = []
        iterates = [state.theta.copy()]
        if state.t == 0:
            trace.append(self.evaluate(state))
        while state.t < self.iterations:
            if self.env_step_budget and state.cumulative_env_steps >= self.env_step_budget:
                self.logger.info(f"Environment-step budget {self.env_step_budget} spent at t={state.t}")
                break
            outcome = self.step(state)
            state = outcome.state
            trace.append(outcome.record)
            iterates.append(state.theta.copy())
            if checkpoint is not None:
                save_checkpoint(checkpoint, self.algorithm, state)

        pick = int(self.streams.generator(RandomStreams.SELECTION).integers(len(iterates)))
        last = trace[-1].mean_return if trace else float("nan")
        self.logger.info(f"✅ {self.algorithm} finished at t={state.t} after {state.cumulative_env_steps} "
                         f"environment steps; last mean return {last:.4g}")
        return RunResult(algorithm=self.algorithm, trace=trace, final_state=state, sampled_theta=iterates[pick],
                         iterates=iterates)


def save_checkpoint(path: Union[str, Path], algorithm: str, state: OptimizerState) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"algorithm": algorithm, "state": state.to_checkpoint()}, indent=2))
    return path


def load_checkpoint(path: Union[str, Path]) -> tuple:
    """Returns (algorithm, OptimizerState)."""
    data = json.loads(Path(path).read_text())
    return data["algorithm"], OptimizerState.from_checkpoint(data["state"])
