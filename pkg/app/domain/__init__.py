"""Domain layer: value objects, entities and exceptions of the free boundary solver"""

from .exceptions import (  # noqa: F401
    ConfigError,
    DegenerateParameterizationError,
    DomainError,
    GeometrySyncError,
    InfeasibleGeometryError,
    InfeasibleTopologyError,
    InvalidParameterError,
    LineSearchError,
    MeshIntegrityError,
    MeshQualityError,
    OptimizationFailedError,
    SolverError,
    StudyAssertionError,
)
from .value_objects import AxisSpec, Marker, OptimizerParams, PenaltyParams  # noqa: F401
