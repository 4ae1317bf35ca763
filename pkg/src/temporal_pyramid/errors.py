"""Exception types shared across the package.

The CLI maps each class to a distinct exit code.
"""


class DataError(ValueError):
    """Malformed, missing or inconsistent input data."""


class DimensionMismatch(DataError):
    """Array shapes that should agree do not."""


class NumericError(ArithmeticError):
    """A loss or gradient became non-finite."""
