"""Exception hierarchy shared by every module of the package."""


class NonlocalKitError(Exception):
    """Base class for all package errors."""


class DomainError(NonlocalKitError, ValueError):
    """Arguments fall outside the region where a formula is valid."""


class ParameterError(NonlocalKitError, ValueError):
    """Invalid fractional parameters or configuration values."""


class UnsupportedOrderError(NonlocalKitError, ValueError):
    """Requested derivative order exceeds the symbolic recursion cap."""


class TailDivergenceError(NonlocalKitError, ValueError):
    """The function grows too fast at infinity for the requested operator."""


class NotInUkError(TailDivergenceError):
    """The function is not in the admissible class U_k."""


class PreconditionError(NonlocalKitError, ValueError):
    """A declared precondition (smoothness, decay, degree) is not met."""


class GridTooCoarseError(NonlocalKitError, ValueError):
    """Fewer grid points than polynomial coefficients."""


class IllConditionedError(NonlocalKitError, ArithmeticError):
    """Rank-deficient least-squares problem without regularisation."""


class EvaluationError(NonlocalKitError, ArithmeticError):
    """A non-finite integrand sample was produced."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class SamplerDegenerateError(NonlocalKitError, ArithmeticError):
    """Rejection sampler acceptance rate collapsed."""


class NumericalError(NonlocalKitError, ArithmeticError):
    """Generic numerical failure (non-convergence that cannot be reported)."""
