"""Exception hierarchy shared by every dashsvd module."""


class DashSvdError(Exception):
    """Base class for all errors raised by dashsvd."""


class ParseError(DashSvdError):
    """Malformed Matrix Market input. ``line`` is 1-based."""

    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class UnsupportedFormat(DashSvdError):
    """Valid Matrix Market file in a flavour we do not handle (array, complex, hermitian...)."""


class ShapeError(DashSvdError, ValueError):
    """Operand shapes do not conform, or a matrix lacks a required structure."""


class ConfigError(DashSvdError, ValueError):
    """Invalid solver configuration."""


class NumericalError(DashSvdError, ArithmeticError):
    """An iterative kernel failed to converge or produced non-finite values."""


class RankDeficient(NumericalError):
    """A block that must have full column rank does not.

    ``index`` is the 0-based position (in descending singular value order)
    of the first direction that fell below the rank floor.
    """

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"rank deficient at column {index}")


class DegenerateReference(DashSvdError, ValueError):
    """A reference singular value used as a denominator is zero."""


class HypothesisError(DashSvdError, ValueError):
    """Parameters violate the hypotheses of a probabilistic error bound."""
