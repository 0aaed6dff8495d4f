"""Exception types shared across the library."""


class SplitdevError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(SplitdevError, ValueError):
    """An argument is non-finite or outside its admissible range."""


class ShapeError(SplitdevError, ValueError):
    """Array dimensions are mutually inconsistent."""


class DegenerateOperatorError(SplitdevError, ValueError):
    """An operator has no usable curvature (for instance a zero matrix)."""


class DegenerateStepsizeError(SplitdevError, ValueError):
    """A scheme diagonal entry would produce a non-positive or unbounded stepsize."""


class CausalityError(SplitdevError, ValueError):
    """The coupling pair (C, Q) admits no nondecreasing staircase vector."""


class SchemeValidationError(SplitdevError, ValueError):
    """A solve was attempted with a scheme that fails its structural checks."""


class BudgetViolationError(SplitdevError, RuntimeError):
    """A deviation pair exceeded its norm budget."""


class DivergenceError(SplitdevError, RuntimeError):
    """Iterates blew up or turned into NaNs."""


class CsvParseError(SplitdevError, ValueError):
    """Malformed returns CSV input.

    Carries the 1-based line number of the offending row in ``line``.
    """

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InsufficientDataError(SplitdevError, ValueError):
    """A returns matrix is too short to estimate moments from."""


class InvalidParameterError(SplitdevError, ValueError):
    """A model parameter is outside its admissible range."""


class OracleFailureError(SplitdevError, RuntimeError):
    """A reference solve failed to converge."""
