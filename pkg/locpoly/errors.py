"""Exception hierarchy for locpoly."""

from __future__ import annotations


class LocpolyError(Exception):
    """Base class for every error raised by locpoly."""


class ArgumentError(LocpolyError, ValueError):
    """An argument or input precondition is invalid."""


class EvaluationError(LocpolyError):
    """A user-supplied function produced NaN or an infinite value."""


class SingularGramError(LocpolyError):
    """The kernel Gram matrix is not positive definite."""


class EmptyWindowError(LocpolyError):
    """No kernel mass at the evaluation point."""


class SingularDesignError(LocpolyError):
    """The scaled local design matrix is singular or too ill-conditioned."""

    def __init__(self, message: str, condition: float = float("inf")) -> None:
        super().__init__(message)
        self.condition = condition


class DegenerateScanError(LocpolyError):
    """Every grid point of a sup-norm scan had to be skipped."""


class DegenerateMetricError(LocpolyError):
    """The envelope has zero norm under the empirical measure."""


class PreconditionError(LocpolyError):
    """A named precondition of a moment or tail bound does not hold."""

    def __init__(self, condition: str, message: str) -> None:
        super().__init__(f"{condition}: {message}")
        self.condition = condition


class SampleFormatError(LocpolyError):
    """A sample file is unreadable or contains a malformed row."""

    def __init__(self, message: str, row: int | None = None) -> None:
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row
