"""Exception types shared across the package."""


class EmptyCropError(ValueError):
    """Raised when a crop sphere contains no points.

    Signals an unusable initial pose estimate: the cloud holds no data near
    the hypothesized object location.
    """


class DataError(RuntimeError):
    """Raised for unreadable or structurally invalid input files."""


class NumericalError(ArithmeticError):
    """Raised when a computation produces non-finite values."""
