"""Exception types shared across the package."""


class NonuniformCSError(Exception):
    """Base class for all package errors."""


class DomainError(NonuniformCSError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RootFailure(NonuniformCSError, ArithmeticError):
    """A bracketed root solve could not be completed."""


class NoSignChange(RootFailure):
    """The function has the same sign at both ends of every tried bracket."""


class NonFinite(RootFailure):
    """The function returned a non-finite value inside the bracket."""


class Infeasible(NonuniformCSError):
    """No admissible value exists (threshold search or LP feasibility)."""

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail


class QuadratureFailure(NonuniformCSError, ArithmeticError):
    """Numerical integration did not reach the requested accuracy."""


class InsufficientSamples(NonuniformCSError):
    """A Monte-Carlo estimate is too noisy to be reported."""


class RankDeficient(NonuniformCSError, ValueError):
    """A matrix that must have full row rank does not."""


class IterLimit(NonuniformCSError):
    """An iterative solver stopped at its iteration cap."""
