"""
Lightweight builders for geometry and solver objects in tests.

Use these when a test needs a polygon, a boundary or a small mesh without
going through a full RunConfig. Everything is deterministic.
"""
import numpy as np

from app.config import RunConfig
from app.domain.entities import ControlPolygon, MarkedBoundary, ScalarField, TriangleMesh
from app.domain.value_objects import AxisSpec, Marker
from app.services.bezier_geometry import half_ellipse_polygon
from app.services.boundary_model import polygon_boundary
from app.services.meshing import triangulate


PUBLISHED_AXIS = AxisSpec(center=0.5, half_length=0.129)


def make_polygon(
    m: int = 12,
    center: float = 0.5,
    kappa2: float = 0.233,
    r_horizontal: float = 0.3,
    r_vertical: float = 0.3,
) -> ControlPolygon:
    """
    Half-ellipse control polygon around (0, center).

    Defaults give a coarse version of the published half-circle start.
    """
    return half_ellipse_polygon(m, center, kappa2, r_horizontal, r_vertical)


def make_square(size: float = 1.0, marker: Marker = Marker.GAMMA) -> MarkedBoundary:
    """Counterclockwise square [0, size]^2 with one marker on every edge"""
    vertices = np.array([[0.0, 0.0], [size, 0.0], [size, size], [0.0, size]])
    return polygon_boundary(vertices, np.full(4, int(marker)))


def make_strip(half_height: float = 0.5) -> MarkedBoundary:
    """(0, 1) x (-b, b): L bottom, Gamma right, L top, K left"""
    b = half_height
    vertices = np.array([[0.0, -b], [1.0, -b], [1.0, b], [0.0, b]])
    markers = np.array([Marker.L, Marker.GAMMA, Marker.L, Marker.K], dtype=np.int64)
    return polygon_boundary(vertices, markers)


def make_strip_mesh(h: float = 0.25, half_height: float = 0.5) -> TriangleMesh:
    return triangulate(make_strip(half_height), h)


def make_field(mesh: TriangleMesh, func, name: str = "u") -> ScalarField:
    """Nodal interpolant of func(nodes)"""
    return ScalarField(mesh, func(mesh.nodes), name)


def make_config(**overrides) -> RunConfig:
    """
    Coarse RunConfig for tests: m=12, 120 samples, h=0.05, short runs.

    All parameters are overridable.
    """
    values = dict(
        m=12,
        n_samples=120,
        target_h=0.05,
        max_iters=5,
        max_backtracks=12,
        output_dir="runs/test",
        seed=7,
    )
    values.update(overrides)
    return RunConfig(**values)
