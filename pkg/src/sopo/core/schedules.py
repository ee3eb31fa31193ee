"""
Theory-driven parameter schedules.

Batch sizes, epoch length, iteration budget and radius that make the basic
variants reach an ε-approximate subspace second-order stationary point,
plus the total sample counts those choices imply.
"""

import logging
import math

from models import ScheduleConfig, TheoryConstants
from .config import Config
from .errors import EpsilonTooLarge
from .utils import Utils


logger = logging.getLogger(__name__)


def hessian_batch_size(constants: TheoryConstants, epsilon: float, d: int) -> int:
    """|𝓜_H| = 22·24²·G_H²·log d / ε, at least one trajectory."""
    return Utils.ceil_count(22 * 24 ** 2 * constants.G_H ** 2 * math.log(max(d, 1)) / epsilon)


def theory_schedule(constants: TheoryConstants, epsilon: float, d: int, variant: str = "dr") -> ScheduleConfig:
    """
    Schedule for accuracy ε in dimension d.

    dr / fdtr:     |𝓜_g| = 144 G_g²/ε², T = 24 M² Δ_J / ε^1.5, Δ = 2√ε/M
    dvr / fdtr-vr: q = ⌈1/(8√ε)⌉, |𝓜_0| = 288 G_g²/ε², |𝓜̂_g| = 288 G_H²/(M² ε^1.5),
                   requires ε ≤ G_H²/4
    """
    Config.validate_schedule_variant(variant)
    if epsilon <= 0:
        raise ValueError(f"Invalid epsilon '{epsilon}'. Must be positive")
    if d < 1:
        raise ValueError(f"Invalid dimension '{d}'. Must be at least 1")

    M, G_g, G_H, delta_J = constants.M, constants.G_g, constants.G_H, constants.delta_J
    log_d = math.log(d)
    batch_hess = hessian_batch_size(constants, epsilon, d)
    iterations = Utils.ceil_count(24 * M ** 2 * delta_J / epsilon ** 1.5)
    delta = 2 * math.sqrt(epsilon) / M

    if variant in ("dr", "fdtr"):
        batch_grad = Utils.ceil_count(144 * G_g ** 2 / epsilon ** 2)
        schedule = ScheduleConfig(
            epsilon=epsilon,
            batch_grad=batch_grad,
            batch_hess=batch_hess,
            batch_0=batch_grad,
            batch_havr=1,
            q=1,
            iterations=iterations,
            delta=delta,
            total_samples=float((batch_grad + batch_hess) * iterations),
            total_samples_order=(delta_J * M ** 2 * G_g ** 2 / epsilon ** 3.5
                                 + delta_J * M ** 2 * G_H ** 2 * log_d / epsilon ** 2.5),
        )
    else:
        if epsilon > G_H ** 2 / 4:
            raise EpsilonTooLarge(f"epsilon={epsilon:g} exceeds G_H^2/4 = {G_H ** 2 / 4:g}")
        batch_0 = Utils.ceil_count(288 * G_g ** 2 / epsilon ** 2)
        per_iteration_grad = 288 * (8 * G_g ** 2 + G_H ** 2 / M ** 2) / epsilon ** 1.5
        per_iteration_hess = 22 * 24 ** 2 * G_H ** 2 * log_d / epsilon
        schedule = ScheduleConfig(
            epsilon=epsilon,
            batch_grad=batch_0,
            batch_hess=batch_hess,
            batch_0=batch_0,
            batch_havr=Utils.ceil_count(288 * G_H ** 2 / (M ** 2 * epsilon ** 1.5)),
            q=Utils.ceil_count(1.0 / (8 * math.sqrt(epsilon))),
            iterations=iterations,
            delta=delta,
            total_samples=(per_iteration_grad + per_iteration_hess) * iterations,
            total_samples_order=(delta_J * (8 * M ** 2 * G_g ** 2 + G_H ** 2) / epsilon ** 3
                                 + delta_J * M ** 2 * G_H ** 2 * log_d / epsilon ** 2.5),
        )

    logger.debug(f"Schedule {variant} at ε={epsilon:g}: |M_g|={schedule.batch_grad} T={schedule.iterations}")
    return schedule
