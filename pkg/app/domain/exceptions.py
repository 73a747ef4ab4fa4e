"""
Domain exceptions.

Every failure the solver can report derives from DomainError so the CLI can
catch one type, write a failure record and exit non-zero.
"""

from typing import Any, Optional


class DomainError(Exception):
    """Base exception for domain layer errors"""
    pass


class InvalidParameterError(DomainError, ValueError):
    """Raised when an argument or parameter is out of its admissible range"""
    pass


class DegenerateParameterizationError(DomainError):
    """Raised when the curve speed |x'(s)| vanishes"""

    def __init__(self, s: float, speed: float):
        self.s = s
        self.speed = speed
        super().__init__(f"Degenerate parameterization at s={s:.6g}: |x'(s)|={speed:.3e}")


class InfeasibleTopologyError(DomainError):
    """Raised when the tips and K do not leave two nonempty L runs"""
    pass


class InfeasibleGeometryError(DomainError):
    """Raised when a boundary self-intersects, crosses the axis or has no area"""
    pass


class MeshQualityError(DomainError):
    """Raised when refinement cannot meet the quality targets"""
    pass


class MeshIntegrityError(DomainError):
    """Raised when a boundary edge does not have exactly one adjacent triangle"""

    def __init__(self, edge: tuple[int, int], count: int):
        self.edge = edge
        self.count = count
        super().__init__(
            f"Boundary edge {edge} has {count} adjacent triangles (expected 1)"
        )


class SolverError(DomainError):
    """Raised when a linear solve is singular or returns non-finite values"""
    pass


class GeometrySyncError(DomainError):
    """Raised when a boundary sample cannot be located in the current mesh"""
    pass


class LineSearchError(DomainError):
    """Raised when no step passes the sufficient-decrease test"""

    def __init__(self, message: str, state: Optional[Any] = None):
        self.state = state
        super().__init__(message)


class ConfigError(DomainError):
    """Raised when a run configuration cannot be parsed or validated"""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class StudyAssertionError(DomainError):
    """Raised when a verification suite or property study fails its assertions"""

    def __init__(self, message: str, report: Optional[Any] = None):
        self.report = report
        super().__init__(message)


class OptimizationFailedError(DomainError):
    """Raised when the outer loop aborts; carries the last accepted state"""

    def __init__(self, message: str, state: Optional[Any] = None, cause: Optional[Exception] = None):
        self.state = state
        self.cause = cause
        super().__init__(message)
