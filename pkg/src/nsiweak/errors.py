"""Exception hierarchy shared by all modules."""


class NSIError(Exception):
    """Base class for all package errors."""


class DomainError(NSIError, ValueError):
    """Evaluation point outside the half-plane or the field's domain."""


class EmptySetError(NSIError, ValueError):
    """A shrunken rectangle would be empty."""


class DegenerateInputError(NSIError, ValueError):
    """Coincident nodes or otherwise degenerate input."""


class PreconditionError(NSIError, ValueError):
    """An operation was called outside its stated preconditions."""


class CertificationError(NSIError):
    """A grid certification failed.

    Parameters
    ----------
    clause : str
        Name of the violated clause.
    witness : tuple or None
        Point (and time, when relevant) where the violation was observed.
    margin : float
        Worst observed margin (negative on failure).
    """

    def __init__(self, clause, witness=None, margin=float("nan"), message=None):
        self.clause = clause
        self.witness = witness
        self.margin = margin
        msg = message or f"certification failed: {clause} (margin {margin:.3e} at {witness})"
        super().__init__(msg)


class ConstructionError(CertificationError):
    """A constructed field violated an invariant it should satisfy by design."""


class CombinationError(CertificationError):
    """The switching condition failed at a switch time."""


class AccuracyError(NSIError, ArithmeticError):
    """Quadrature did not reach the requested accuracy.

    Attributes
    ----------
    estimate : float
        Best available value.
    error : float
        Achieved error estimate.
    """

    def __init__(self, message, estimate=float("nan"), error=float("nan")):
        self.estimate = estimate
        self.error = error
        super().__init__(f"{message} (estimate {estimate:.6e}, error {error:.2e})")


class SingularityError(NSIError, ArithmeticError):
    """Kernel evaluated exactly on its singular set."""


class SizingError(NSIError, ValueError):
    """A parameter search ran out of room (e.g. rectangle too small for K frames)."""
