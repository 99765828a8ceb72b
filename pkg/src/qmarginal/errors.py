"""Exception and warning types shared across the package."""


class QMarginalError(Exception):
    """Base class for all package errors."""


class HermiticityError(QMarginalError, ValueError):
    """Input matrix is not Hermitian within tolerance."""


class CapacityError(QMarginalError, ValueError):
    """Problem size exceeds the dense desk-scale limits."""


class RangeError(QMarginalError, OverflowError):
    """Numeric range exceeded (e.g. matrix exponential overflow)."""


class CoverageError(QMarginalError, ValueError):
    """An observable is not supported inside any of the given subsets."""


class DimensionError(QMarginalError, ValueError):
    """Operand dimensions do not match."""


class DegenerateInstanceError(QMarginalError, ValueError):
    """Instance is degenerate for the requested reduction."""


class ConvergenceError(QMarginalError, RuntimeError):
    """Iterative procedure exceeded its proven iteration bound."""


class PreconditionError(QMarginalError, ValueError):
    """Input violates a documented precondition."""


class InvariantError(QMarginalError, RuntimeError):
    """Internal invariant violated."""


class BudgetExhausted(QMarginalError, RuntimeError):
    """Raised internally when an oracle-query or wall-time budget runs out."""


class MarginalDisagreementWarning(UserWarning):
    """Overlapping marginals disagree on their common qubits."""


class ClampWarning(UserWarning):
    """A parameter outside its nominal range was clamped."""
