"""Exception hierarchy shared by all solver layers."""

from __future__ import annotations

from fractions import Fraction


class OdeStrataError(Exception):
    """Base class; the CLI maps subclasses to exit statuses."""


class ParseError(OdeStrataError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


class SolverError(OdeStrataError):
    """Any failure of a solver on a well-formed problem."""


class DomainError(SolverError):
    pass


class RadiusError(SolverError):
    pass


class BoundaryError(SolverError):
    pass


class EvaluationError(SolverError):
    pass


class InvalidModulusError(SolverError):
    pass


class NoUniquenessBoundError(SolverError):
    pass


class UnsupportedError(SolverError):
    pass


class ContinuationStalled(SolverError):
    def __init__(self, message: str, reached: Fraction):
        self.reached = reached
        super().__init__(f"{message} (reached t={reached})")


class DomainExitError(SolverError):
    def __init__(self, message: str, index: int, time: Fraction | None = None):
        self.index = index
        self.time = time
        super().__init__(f"{message} (mesh index {index})")


class StallError(SolverError):
    def __init__(self, message: str, reached: Fraction):
        self.reached = reached
        super().__init__(f"{message} (reached t={reached})")


class PrecisionUnreachable(SolverError):
    def __init__(self, message: str, achievable: Fraction | None):
        self.achievable = achievable
        super().__init__(f"{message} (best certified bound {achievable})")


class PartialSolutionError(SolverError):
    def __init__(self, message: str, reached: Fraction, polygon=None):
        self.reached = reached
        self.polygon = polygon
        super().__init__(f"{message} (reached t={reached})")
