"""Exception types raised across the package.

Each subclass corresponds to one failure mode named in the public contracts,
so callers (and the CLI exit-code mapping) can dispatch on type.
"""


class LSLabError(Exception):
    """Base class for all lslab errors."""


class InvalidParameter(LSLabError, ValueError):
    pass


class JunctionMismatch(LSLabError, ValueError):
    pass


class UnsupportedPinch(LSLabError, ValueError):
    pass


class ShapeError(LSLabError, ValueError):
    pass


class NormalizationError(LSLabError, ValueError):
    pass


class InvalidField(LSLabError, ValueError):
    pass


class SignError(LSLabError, ValueError):
    pass


class StaleResult(LSLabError, ValueError):
    """A lemma check was handed an unconverged solver result."""


class OutOfRange(LSLabError, ValueError):
    pass


class UnderflowRegion(LSLabError, ValueError):
    pass


class InsufficientData(LSLabError, ValueError):
    pass


class InvalidCutoff(LSLabError, ValueError):
    pass


class UnknownSegment(LSLabError, KeyError):
    pass


class BracketFailure(LSLabError, RuntimeError):
    pass


class PinchPreconditionFailure(LSLabError, RuntimeError):
    pass


class BudgetViolation(LSLabError, ArithmeticError):
    pass


class InvalidDistribution(LSLabError, ValueError):
    pass


class IncompleteRun(LSLabError, FileNotFoundError):
    pass


class ParseError(LSLabError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
