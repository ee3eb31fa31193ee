"""
Exceptions raised by the laboratory components.
"""

from typing import Optional


class SopoError(Exception):
    """Base class of all laboratory errors."""


class NonPsdMetric(SopoError):
    """The step metric G has a clearly negative eigenvalue."""


class DegenerateSubspace(SopoError):
    """span{g, d_prev} collapsed; the 1D fallback must be used."""


class NoConvergence(SopoError):
    """The multiplier root-finder exceeded its iteration cap."""


class IndefiniteSystem(SopoError):
    """Q + 2λG is not positive definite; λ must grow."""


class NotInSubspace(SopoError):
    """A step has a component outside span{g, d_prev}."""


class TooLarge(SopoError):
    """An exact oracle would exceed its dynamic-programming or enumeration budget."""


class Unsupported(SopoError):
    """The operation is not defined for this policy family."""


class EpsilonTooLarge(SopoError):
    """The requested accuracy violates the variance-reduced schedule precondition."""


class ZeroReduction(SopoError):
    """The model predicts no decrease for the proposed step."""


class OracleFailure(SopoError):
    """One or more oracle cross-checks failed."""


class ConfigError(SopoError):
    """An experiment configuration could not be parsed or validated."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")


class DegenerateBaseline(UserWarning):
    """The baseline feature Gram matrix is singular; a ridge was applied."""
