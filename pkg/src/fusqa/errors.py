"""Exception types shared across the toolkit."""


class FusqaError(Exception):
    """Base class for toolkit errors."""


class DataError(FusqaError, ValueError):
    """Malformed, missing or inconsistent input data."""


class NumericError(FusqaError, ArithmeticError):
    """A computation produced non-finite values or could not converge."""


class DegradationError(FusqaError, ValueError):
    """A mask degradation could not be applied to the chosen class."""
