"""Exception types raised across foba-select."""
from pathlib import Path
from typing import Optional

import numpy as np


class FobaSelectError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(FobaSelectError, ValueError):
    def __init__(self, what: str, expected: int, actual: int):
        super().__init__(f"{what}: expected length {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class NonFiniteValue(FobaSelectError, ValueError):
    pass


class NonConvergence(FobaSelectError, RuntimeError):
    """Inner solve hit its iteration cap above the gradient tolerance.

    Args:
        best: Best iterate reached (full-length vector, zero off the support)
        grad_norm: Restricted gradient infinity norm at ``best``
        iterations: Iterations spent
    """

    def __init__(self, best: np.ndarray, grad_norm: float, iterations: int):
        super().__init__(
            f"restricted solve stopped after {iterations} iterations "
            f"with |grad|_inf={grad_norm:.3e}"
        )
        self.best = best
        self.grad_norm = grad_norm
        self.iterations = iterations


class ZeroCurvatureColumn(FobaSelectError, RuntimeError):
    def __init__(self, column: int):
        super().__init__(f"design column {column} has zero norm")
        self.column = column


class NoCandidate(FobaSelectError, RuntimeError):
    pass


class MismatchedRule(FobaSelectError, ValueError):
    pass


class GuardViolation(FobaSelectError, ValueError):
    pass


class NoValidSample(FobaSelectError, RuntimeError):
    """Every sampled pair fell outside the sublevel set or below rounding level."""

    def __init__(self, draws: int):
        super().__init__(f"no usable curvature sample in {draws} draws")
        self.draws = draws


class BothEmpty(FobaSelectError, ValueError):
    pass


class ZeroTruth(FobaSelectError, ValueError):
    pass


class UnmappedFeature(FobaSelectError, KeyError):
    def __init__(self, feature: int):
        super().__init__(f"feature {feature} has no group")
        self.feature = feature


class MalformedLine(FobaSelectError, ValueError):
    def __init__(self, path: Optional[Path], line_no: int, reason: str):
        where = f"{path}:{line_no}" if path else f"line {line_no}"
        super().__init__(f"{where}: {reason}")
        self.path = path
        self.line_no = line_no


class IndexOutOfDeclaredRange(MalformedLine):
    pass


class ConfigError(FobaSelectError, ValueError):
    pass
