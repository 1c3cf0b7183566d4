from __future__ import annotations

from typing import Any, List, Optional


class ShellError(Exception):
    """Base class of every error raised by cosseratshell."""


# so3 / gfe


class AngleAtPi(ShellError, ArithmeticError):
    pass


class NonPositiveDeterminant(ShellError, ArithmeticError):
    pass


class CoefficientsTooSpread(ShellError, ArithmeticError):
    def __init__(self, message: str, triangle: Optional[int] = None):
        if triangle is not None:
            message = f"triangle {triangle}: {message}"
        super().__init__(message)
        self.triangle = triangle


class NoConvergence(ShellError, RuntimeError):
    pass


# mesh


class ParseError(ShellError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NonManifoldEdge(ShellError, ValueError):
    def __init__(self, edge: Any, count: int):
        super().__init__(f"edge {tuple(edge)} is shared by {count} triangles")
        self.edge = tuple(edge)
        self.count = count


class DegenerateImmersion(ShellError, ValueError):
    def __init__(self, message: str, triangle: Optional[int] = None):
        if triangle is not None:
            message = f"triangle {triangle}: {message}"
        super().__init__(message)
        self.triangle = triangle


class InvalidResolution(ShellError, ValueError):
    pass


# assembly


class UnsupportedOrder(ShellError, ValueError):
    pass


class UnknownNode(ShellError, ValueError):
    pass


# solver


class StalledAtNonstationaryPoint(ShellError, RuntimeError):
    pass


class LoadProgramAborted(ShellError, RuntimeError):
    def __init__(self, step: int, parameter: float, cause: BaseException, completed: List[Any]):
        super().__init__(f"load step {step} (parameter {parameter:g}) failed: {type(cause).__name__}: {cause}")
        self.step = step
        self.parameter = parameter
        self.cause = cause
        self.completed = completed


# cli


class EmptySelection(ShellError, ValueError):
    pass


class IoError(ShellError, OSError):
    pass


class ConfigError(ShellError, ValueError):
    pass
