"""Exception types raised across the package."""


class FeasibilityError(Exception):
    """Base class for all package errors."""


class InvalidSetError(FeasibilityError, ValueError):
    """A set was constructed with degenerate data (zero normal, bad radius)."""


class OracleContractError(FeasibilityError):
    """A caller-supplied functional oracle broke its contract."""


class OracleFailureError(FeasibilityError):
    """The reference distance oracle did not converge within its budget."""


class InvalidParameterError(FeasibilityError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class InvalidControlError(FeasibilityError, ValueError):
    """An outer schedule or inner strategy is malformed."""


class ControlInvariantError(FeasibilityError, RuntimeError):
    """Internal bookkeeping of the lopping/flagging scheduler went wrong."""


class InvalidWitnessError(FeasibilityError, ValueError):
    """A point passed as a feasible witness is not feasible."""


class InvalidProblemError(FeasibilityError, ValueError):
    """A problem instance violates its invariants."""


class InsufficientDataError(FeasibilityError, ValueError):
    """Not enough data to fit or estimate a quantity."""
