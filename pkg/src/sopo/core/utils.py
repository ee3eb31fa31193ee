"""
Utility functions for the policy optimization laboratory.
"""

import math
from typing import Tuple

import numpy as np


class RandomStreams:
    """
    Counter-derived random substreams.

    Every (seed, *keys) path maps to its own SeedSequence, so a draw never
    depends on how many other draws happened before it. Optimizers key
    their batches by (iteration, purpose), which keeps runs reproducible
    and lets two algorithms share identical batches when their keys agree.
    """

    # Purposes of the per-iteration batches
    GRADIENT = 0
    HESSIAN = 1
    HAVR = 2
    RATIO = 3
    EVALUATION = 4
    SELECTION = 5
    INITIAL = 6

    def __init__(self, seed: int, prefix: Tuple[int, ...] = ()):
        self.seed = int(seed)
        self.prefix = tuple(int(k) for k in prefix)

    def sequence(self, *keys: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.seed, spawn_key=self.prefix + tuple(int(k) for k in keys))

    def generator(self, *keys: int) -> np.random.Generator:
        return np.random.default_rng(self.sequence(*keys))

    def child(self, *keys: int) -> "RandomStreams":
        return RandomStreams(self.seed, self.prefix + tuple(int(k) for k in keys))

    def __repr__(self) -> str:
        return f"RandomStreams(seed={self.seed}, prefix={self.prefix})"


class Utils:
    """Utility functions."""

    @staticmethod
    def ceil_count(value: float) -> int:
        """
        Round a formula value up to a positive integer count.

        Values within a relative 1e-9 of an integer are snapped first, so
        144 / 0.01**2 gives 1,440,000 rather than 1,440,001.
        """
        if not math.isfinite(value):
            raise ValueError(f"Cannot round non-finite count {value}")
        nearest = round(value)
        if abs(value - nearest) <= 1e-9 * max(1.0, abs(value)):
            return max(int(nearest), 1)
        return max(int(math.ceil(value)), 1)

    @staticmethod
    def format_count(value: float) -> str:
        """Human-readable count with thousands separators."""
        if float(value).is_integer():
            return f"{int(value):,}"
        return f"{value:,.4g}"

    @staticmethod
    def interpolate_on_grid(x: np.ndarray, y: np.ndarray, grid: np.ndarray) -> np.ndarray:
        """
        Piecewise-linear interpolation of a trace onto a grid.

        Repeated x values (iterations that spent no samples) keep their last y.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        keep = np.append(x[1:] != x[:-1], True)
        return np.interp(grid, x[keep], y[keep])

    @staticmethod
    def safe_norm(v: np.ndarray) -> float:
        return float(np.linalg.norm(v)) if v.size else 0.0
