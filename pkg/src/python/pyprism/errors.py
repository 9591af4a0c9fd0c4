"""
PyPrism exception hierarchy.

Every error raised by the library derives from ``PrismError``. Each concrete
error also derives from the closest builtin so that callers may catch either.
"""

from typing import Any, Dict, Optional


class PrismError(Exception):
    """Base class for all PyPrism errors."""


class DimensionMismatchError(PrismError, ValueError):
    """Array shapes disagree."""


class InvalidParameterError(PrismError, ValueError):
    """A parameter is outside its documented domain."""


class SingularDensityError(PrismError, ValueError):
    """Dirichlet density is singular at a boundary point (some alpha_n < 1)."""

    def __init__(self, message: str = "density singular at boundary"):
        super().__init__(message)


class RankDeficiencyError(PrismError, ArithmeticError):
    """A matrix required to have full column rank does not."""


class FactorizationError(PrismError, ArithmeticError):
    """A symmetric positive-definite factorization failed."""

    def __init__(self, message: str, smallest_eigenvalue: Optional[float] = None):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class DegenerateCovarianceError(PrismError, ArithmeticError):
    """The LMMSE error covariance has non-positive trace."""


class DegenerateWeightsError(PrismError, ArithmeticError):
    """All importance weights underflowed."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics: Dict[str, Any] = dict(diagnostics or {})

    def with_context(self, **context: Any) -> "DegenerateWeightsError":
        """Return a copy carrying extra diagnostic fields (observation index, iteration)."""
        merged = {**self.diagnostics, **context}
        where = ", ".join(f"{key}={value}" for key, value in context.items())
        return DegenerateWeightsError(f"{self.args[0]} ({where})", merged)


class UnsupportedProposalError(PrismError, TypeError):
    """The proposal variant cannot be used for importance weighting."""


class ParseError(PrismError, ValueError):
    """A text file could not be parsed."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class EmStepError(PrismError, RuntimeError):
    """An E-step or M-step failed inside run_em."""

    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"EM iteration {iteration} failed: {cause}")
        self.iteration = iteration
        self.cause = cause
