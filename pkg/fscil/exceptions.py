"""Error hierarchy shared by every fscil module."""

from typing import List, Optional


class FSCILError(Exception):
    """Base class for all errors raised by fscil."""


class DimensionError(FSCILError, ValueError):
    """Operand shapes do not agree."""


class NumericError(FSCILError, ArithmeticError):
    """A NaN or infinite value reached an operation that cannot accept it."""


class ContractError(FSCILError, ValueError):
    """A precondition of an operation was violated."""


class LabelRangeError(ContractError, IndexError):
    """A class label lies outside the logit columns."""


class ParseError(FSCILError, ValueError):
    """A feature file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapacityError(FSCILError, ValueError):
    """A class holds too few instances for the requested sampling."""

    def __init__(self, message: str, class_id: Optional[int] = None):
        self.class_id = class_id
        super().__init__(message)


class DivergenceError(FSCILError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, iteration: int):
        self.iteration = iteration
        super().__init__(f"{message} (iteration {iteration})")


class ConfigError(FSCILError, ValueError):
    """The run configuration is invalid."""

    def __init__(self, message: str, fields: Optional[List[str]] = None):
        self.fields = fields or []
        super().__init__(message)
