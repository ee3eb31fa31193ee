"""
Trust-region subproblem solvers.

solve_drtr handles the reduced k-dimensional problem (k ≤ 2)

    min_α  cᵀα + ½αᵀQα   s.t.  αᵀGα ≤ Δ²

by simultaneous diagonalization of the pencil (Q, G): with VᵀGV = I and
VᵀQV = diag(w), α(λ) = −V (b / (w + λ)) for b = Vᵀc, and the boundary
multiplier is the root of ‖b / (w + λ)‖ = Δ on (max(0, −w_min), ∞).

solve_fdtr_steihaug solves the same problem over the full parameter space
with truncated conjugate gradients, touching the Hessian only through its
action on vectors.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import brentq

from models import FdtrSolution, SubspaceKktReport, TRSolution, TwoDimModel
from .config import Config
from .constants import INDEFINITE_TOL, IN_SUBSPACE_TOL, NON_PSD_TOL, RADIUS_SLACK, RANK_TOL
from .errors import DegenerateSubspace, IndefiniteSystem, NoConvergence, NonPsdMetric, NotInSubspace


logger = logging.getLogger(__name__)

Hvp = Callable[[np.ndarray], np.ndarray]

HARD_CASE_TOL = 1e-12


def solve_drtr(model: TwoDimModel) -> TRSolution:
    """Global minimizer of the reduced model in the G-norm ball, with its multiplier."""
    Q, c, G, delta = model.Q, model.c, model.G, model.delta
    if np.linalg.eigvalsh(G)[0] < -NON_PSD_TOL:
        raise NonPsdMetric(f"Step metric has eigenvalue {np.linalg.eigvalsh(G)[0]:.3e} < {-NON_PSD_TOL:g}")
    try:
        w, V = linalg.eigh(Q, G)
    except linalg.LinAlgError as e:
        raise DegenerateSubspace(f"Step metric is singular: {e}") from e

    b = V.T @ c
    w_min = float(w[0])
    b_norm = float(np.linalg.norm(b))

    def coefficients(lam: float) -> np.ndarray:
        return np.divide(-b, w + lam, out=np.zeros_like(b), where=b != 0)

    if w_min >= 0 and b_norm == 0.0:
        return _solution(model, np.zeros_like(c), 0.0, boundary=False, hard_case=False, iterations=0, w_min=w_min)

    if w_min > 0:
        beta = coefficients(0.0)
        if np.linalg.norm(beta) <= delta:
            return _solution(model, V @ beta, 0.0, boundary=False, hard_case=False, iterations=0, w_min=w_min)

    lo = max(0.0, -w_min)
    scale = max(1.0, abs(w_min), float(np.max(np.abs(w))))
    lowest = (w - w_min) <= HARD_CASE_TOL * scale
    b_low = float(np.linalg.norm(b[lowest]))

    if w_min <= 0 and b_low <= HARD_CASE_TOL * max(1.0, b_norm):
        rest = np.zeros_like(b)
        rest[~lowest] = -b[~lowest] / (w[~lowest] + lo)
        rest_norm = float(np.linalg.norm(rest))
        if rest_norm <= delta:
            # Hard case: fill the boundary along the most negative pencil direction
            fill = math.sqrt(max(delta ** 2 - rest_norm ** 2, 0.0))
            beta = rest.copy()
            k = int(np.flatnonzero(lowest)[0])
            beta[k] = -fill if b[k] > 0 else fill
            logger.debug(f"Hard case at λ={lo:.6g}, fill {fill:.6g}")
            return _solution(model, V @ beta, lo, boundary=True, hard_case=True, iterations=0, w_min=w_min)

    def secular(lam: float) -> float:
        return float(np.linalg.norm(coefficients(lam))) - delta

    left = 0.0 if w_min > 0 else lo + b_low / (2.0 * delta)
    right = lo + b_norm / delta
    if left >= right:
        right = left + b_norm / delta
    try:
        lam, result = brentq(secular, left, right, xtol=Config.SECULAR_TOL,
                             maxiter=Config.SECULAR_MAX_ITER, full_output=True, disp=False)
    except (ValueError, RuntimeError) as e:
        raise NoConvergence(f"Secular equation failed on [{left:.6g}, {right:.6g}]: {e}") from e
    if not result.converged:
        raise NoConvergence(f"Secular equation did not converge in {Config.SECULAR_MAX_ITER} iterations")

    beta = coefficients(lam)
    norm = float(np.linalg.norm(beta))
    if norm > delta:
        beta *= delta / norm
    return _solution(model, V @ beta, float(lam), boundary=True, hard_case=False,
                     iterations=result.iterations, w_min=w_min)


def _solution(model: TwoDimModel, alpha: np.ndarray, lam: float, boundary: bool, hard_case: bool,
              iterations: int, w_min: float) -> TRSolution:
    return TRSolution(
        alpha=alpha,
        lam=lam,
        predicted_reduction=-model.value(alpha),
        boundary=boundary,
        hard_case=hard_case,
        iterations=iterations,
        min_pencil_eig=w_min,
    )


def solve_drtr_1d(g_sq: float, g_hg: float, delta: float) -> TRSolution:
    """
    Fallback along −g: min −‖g‖²a + ½a²gᵀHg s.t. |a|·‖g‖ ≤ Δ.

    The returned α is padded to (a, 0) so it lifts like a subspace solution.
    """
    if g_sq <= 0.0:
        return TRSolution(alpha=np.zeros(2), lam=0.0, predicted_reduction=0.0)
    model = TwoDimModel(Q=[[g_hg]], c=[-g_sq], G=[[g_sq]], delta=delta)
    solution = solve_drtr(model)
    return solution.model_copy(update={"alpha": np.array([solution.alpha[0], 0.0])})


def solve_radius_free(Q: np.ndarray, c: np.ndarray, G: np.ndarray, lam: float) -> np.ndarray:
    """Minimizer of cᵀα + ½αᵀQα + λ‖α‖²_G, i.e. the solution of (Q + 2λG)α = −c."""
    if lam < 0:
        raise ValueError(f"Invalid multiplier '{lam}'. Must be nonnegative")
    A = np.atleast_2d(np.asarray(Q, dtype=float)) + 2.0 * lam * np.atleast_2d(np.asarray(G, dtype=float))
    A = 0.5 * (A + A.T)
    smallest = float(np.linalg.eigvalsh(A)[0])
    if smallest <= INDEFINITE_TOL:
        raise IndefiniteSystem(f"Q + 2λG has eigenvalue {smallest:.3e} at λ={lam:g}")
    return linalg.solve(A, -np.atleast_1d(np.asarray(c, dtype=float)), assume_a="pos")


def reduced_data(g: np.ndarray, d: np.ndarray, hg: np.ndarray, hd: np.ndarray
                 ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Q, c, G over the basis (−g, d) from the Hessian actions Hg and Hd."""
    off = -0.5 * (d @ hg + g @ hd)
    Q = np.array([[g @ hg, off], [off, d @ hd]])
    c = np.array([-(g @ g), g @ d])
    G = np.array([[g @ g, -(g @ d)], [-(g @ d), d @ d]])
    return Q, c, G


def build_drtr_data(g: np.ndarray, d: np.ndarray, hvp: Hvp) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = np.asarray(g, dtype=float)
    d = np.asarray(d, dtype=float)
    return reduced_data(g, d, hvp(g), hvp(d))


def lift_direction(alpha: np.ndarray, g: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Parameter-space step −α₁g + α₂d."""
    return -alpha[0] * np.asarray(g, dtype=float) + alpha[1] * np.asarray(d, dtype=float)


@dataclass
class SubspaceStep:
    """A lifted subspace step and how it was obtained."""
    step: np.ndarray
    solution: TRSolution
    fallback: bool
    hvp_calls: int


def is_degenerate(g: np.ndarray, d: np.ndarray) -> bool:
    d_norm = float(np.linalg.norm(d))
    if d_norm < Config.DEGENERACY_TOL:
        return True
    g_sq = float(g @ g)
    det = g_sq * float(d @ d) - float(g @ d) ** 2
    return abs(det) <= Config.DEGENERACY_TOL * g_sq * d_norm ** 2


def solve_subspace_step(g: np.ndarray, d_prev: np.ndarray, hvp: Hvp, delta: float) -> SubspaceStep:
    """
    Build and solve the reduced problem on span{−g, d_prev}, falling back to the
    1D problem along −g when the span collapses (first iteration, tiny or
    parallel d_prev).
    """
    g = np.asarray(g, dtype=float)
    d_prev = np.asarray(d_prev, dtype=float)
    if is_degenerate(g, d_prev):
        g_sq = float(g @ g)
        if g_sq == 0.0:
            # No step, but the curvature along d_prev still reports the subspace eigenvalue
            solution = solve_drtr_1d(0.0, 0.0, delta)
            d_sq = float(d_prev @ d_prev)
            if d_sq == 0.0:
                return SubspaceStep(np.zeros_like(g), solution, fallback=True, hvp_calls=0)
            curvature = float(d_prev @ hvp(d_prev)) / d_sq
            return SubspaceStep(np.zeros_like(g), solution.model_copy(update={"min_pencil_eig": curvature}),
                                fallback=True, hvp_calls=1)
        solution = solve_drtr_1d(g_sq, float(g @ hvp(g)), delta)
        return SubspaceStep(lift_direction(solution.alpha, g, d_prev), solution, fallback=True, hvp_calls=1)

    Q, c, G = reduced_data(g, d_prev, hvp(g), hvp(d_prev))
    solution = solve_drtr(TwoDimModel(Q=Q, c=c, G=G, delta=delta))
    return SubspaceStep(lift_direction(solution.alpha, g, d_prev), solution, fallback=False, hvp_calls=2)


def orthonormal_basis(*vectors: np.ndarray) -> np.ndarray:
    """Gram–Schmidt basis (columns) of the span; near-dependent vectors are dropped."""
    columns = []
    for vec in vectors:
        vec = np.asarray(vec, dtype=float)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            continue
        residual = vec.copy()
        for q in columns:
            residual -= (q @ residual) * q
        r_norm = float(np.linalg.norm(residual))
        if r_norm <= RANK_TOL * norm:
            continue
        columns.append(residual / r_norm)
    if not columns:
        return np.zeros((vectors[0].shape[0], 0))
    return np.column_stack(columns)


def check_subspace_kkt(d_step: np.ndarray, lam: float, g: np.ndarray, d_prev: np.ndarray, hvp: Hvp,
                       delta: float) -> SubspaceKktReport:
    """
    Residuals of the full-scale trust-region KKT system with the Hessian
    projected onto span{g, d_prev}: H̃ = VVᵀ·sym(H)·VVᵀ.
    """
    d_step = np.asarray(d_step, dtype=float)
    g = np.asarray(g, dtype=float)
    V = orthonormal_basis(g, np.asarray(d_prev, dtype=float))
    step_norm = float(np.linalg.norm(d_step))
    outside = d_step - V @ (V.T @ d_step)
    if np.linalg.norm(outside) > IN_SUBSPACE_TOL * step_norm:
        raise NotInSubspace(
            f"Step has component {np.linalg.norm(outside):.3e} outside span{{g, d_prev}} (‖d‖={step_norm:.3e})"
        )

    rank = V.shape[1]
    feasibility = max(0.0, step_norm - delta)
    complementarity = abs(lam * (delta - step_norm))
    if rank == 0:
        return SubspaceKktReport(stationarity=0.0, feasibility=feasibility, complementarity=complementarity,
                                 min_subspace_eig=None, reduction_gap=0.0, rank=0)

    HV = np.column_stack([hvp(V[:, j]) for j in range(rank)])
    projected = V.T @ HV
    projected = 0.5 * (projected + projected.T)
    y = V.T @ d_step
    stationarity = float(np.linalg.norm(projected @ y + lam * y + V.T @ g))
    model_change = float(g @ d_step + 0.5 * y @ projected @ y)
    reduction_gap = model_change + 0.5 * lam * step_norm ** 2
    logger.debug(f"Subspace KKT: stationarity={stationarity:.3e} reduction gap={reduction_gap:.3e}")
    return SubspaceKktReport(
        stationarity=stationarity,
        feasibility=feasibility,
        complementarity=complementarity,
        min_subspace_eig=float(np.linalg.eigvalsh(projected)[0]),
        reduction_gap=reduction_gap,
        rank=rank,
    )


def _boundary_intersections(z: np.ndarray, p: np.ndarray, delta: float) -> Tuple[float, float]:
    """Roots ta ≤ tb of ‖z + t·p‖ = Δ."""
    a = p @ p
    b = 2 * (z @ p)
    c = z @ z - delta ** 2
    sqrt_discriminant = math.sqrt(max(b * b - 4 * a * c, 0.0))
    aux = b + math.copysign(sqrt_discriminant, b)
    if aux == 0.0:
        return 0.0, 0.0
    ta, tb = -aux / (2 * a), -2 * c / aux
    return (ta, tb) if ta <= tb else (tb, ta)


def solve_fdtr_steihaug(g: np.ndarray, hvp: Hvp, delta: float, tol: float = Config.STEIHAUG_TOL,
                        max_iter: Optional[int] = None) -> FdtrSolution:
    """
    Steihaug truncated CG on min gᵀd + ½dᵀHd s.t. ‖d‖ ≤ Δ.

    Stops at an interior point with ‖Hd + g‖ ≤ tol·‖g‖, on the boundary when
    an iterate leaves the ball or negative curvature appears, or after
    max_iter (default: the dimension) iterations.
    """
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    max_iter = n if max_iter is None else max_iter
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        return FdtrSolution(d=np.zeros(n), termination="zero_gradient")

    def model_value(d: np.ndarray, hd: np.ndarray) -> float:
        return float(g @ d + 0.5 * d @ hd)

    z = np.zeros(n)
    r = g.copy()
    p = -r
    cauchy_value = None
    termination = "max_iter"
    boundary = False
    iterations = 0
    for _ in range(max_iter):
        bp = hvp(p)
        iterations += 1
        curvature = float(p @ bp)
        if cauchy_value is None:
            # p = −g on the first pass, so gᵀHg = curvature
            step = delta / g_norm if curvature <= 0 else min(g_norm ** 2 / curvature, delta / g_norm)
            cauchy_value = -step * g_norm ** 2 + 0.5 * step ** 2 * curvature

        if curvature <= 0:
            ta, tb = _boundary_intersections(z, p, delta)
            candidates = [z + ta * p, z + tb * p]
            values = [float(g @ x + 0.5 * x @ hvp(x)) for x in candidates]
            z = candidates[int(np.argmin(values))]
            termination, boundary = "negative_curvature", True
            break

        alpha = float(r @ r) / curvature
        z_next = z + alpha * p
        if np.linalg.norm(z_next) >= delta:
            _, tb = _boundary_intersections(z, p, delta)
            z = z + tb * p
            termination, boundary = "boundary", True
            break

        r_next = r + alpha * bp
        z = z_next
        if np.linalg.norm(r_next) < tol * g_norm:
            termination = "converged"
            break
        beta = float(r_next @ r_next) / float(r @ r)
        r = r_next
        p = -r_next + beta * p

    hz = hvp(z)
    lambda_hat = 0.0
    if boundary:
        lambda_hat = max(0.0, -float(z @ (hz + g)) / float(z @ z))
        norm = float(np.linalg.norm(z))
        if norm > delta * (1 + RADIUS_SLACK):
            z *= delta / norm
    logger.debug(f"Steihaug-CG stopped ({termination}) after {iterations} iterations")
    return FdtrSolution(
        d=z,
        boundary_hit=boundary,
        lambda_hat=lambda_hat,
        cg_iterations=iterations,
        termination=termination,
        model_value=model_value(z, hz),
        cauchy_value=cauchy_value,
    )
