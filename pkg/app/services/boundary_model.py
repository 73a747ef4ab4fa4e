"""
Boundary Model Service - the closed, marked boundary of the current domain.

The boundary polyline is assembled counterclockwise as:
    Gamma samples (lower tip -> upper tip)
    upper L run (upper tip -> upper end of K), on the axis
    K (upper end -> lower end), on the axis
    lower L run (lower end of K -> lower tip), on the axis
and closes back at the lower tip. Axis runs are subdivided into edges whose
length matches the Gamma edges next to the tips.
"""

import logging
from dataclasses import dataclass

import numpy as np

from app.domain.entities import ControlPolygon, MarkedBoundary
from app.domain.exceptions import InfeasibleGeometryError, InfeasibleTopologyError, InvalidParameterError
from app.domain.value_objects import AxisSpec, Marker
from app.services.bezier_geometry import sample_curve

logger = logging.getLogger(__name__)

# minimal L run length (delta_L)
DEFAULT_L_GUARD = 1e-3

# tolerance on the turning cross product in the convexity verdict
CONVEXITY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class ConvexityReport:
    """Minimum signed turning cross product and the convexity verdict"""

    min_cross: float
    convex: bool
    vertex: int


def _axis_run(start: float, stop: float, h: float) -> np.ndarray:
    """Ordinates from start to stop (start included, stop excluded) with spacing <= h"""
    n = max(1, int(np.ceil(abs(stop - start) / h - 1e-9)))
    return np.linspace(start, stop, n + 1)[:-1]


def _check_tips(lower_tip: float, upper_tip: float, k: AxisSpec, l_guard: float) -> None:
    lower_gap = k.lower - lower_tip
    upper_gap = upper_tip - k.upper
    if lower_gap <= 0.0 or upper_gap <= 0.0:
        raise InfeasibleTopologyError(
            f"Tips ({lower_tip:.6f}, {upper_tip:.6f}) must lie outside "
            f"K = [{k.lower:.6f}, {k.upper:.6f}] on opposite sides"
        )
    if lower_gap < l_guard or upper_gap < l_guard:
        raise InfeasibleTopologyError(
            f"L runs ({lower_gap:.3e}, {upper_gap:.3e}) are shorter than the guard {l_guard:.1e}"
        )


def _check_gamma(gamma: np.ndarray) -> None:
    if np.any(gamma[1:-1, 0] <= 0.0):
        i = 1 + int(np.argmin(gamma[1:-1, 0]))
        raise InfeasibleGeometryError(
            f"Gamma touches or crosses the axis at sample {i} (x1 = {gamma[i, 0]:.3e})"
        )


def _check_closed(boundary: MarkedBoundary) -> None:
    _check_simple(boundary)
    if boundary.signed_area <= 0.0:
        raise InfeasibleGeometryError(
            f"Boundary is not counterclockwise (signed area {boundary.signed_area:.3e})"
        )


def assemble_boundary(
    cp: ControlPolygon,
    k: AxisSpec,
    n_samples: int,
    l_guard: float = DEFAULT_L_GUARD,
) -> MarkedBoundary:
    """
    Closed counterclockwise marked boundary from the free boundary and K.

    Args:
        cp: control polygon of Gamma (lower tip first)
        k: the Dirichlet segment on the axis
        n_samples: number of Gamma samples
        l_guard: minimal admissible L run length

    Raises:
        InfeasibleTopologyError: a tip inside K or closer than l_guard to it
        InfeasibleGeometryError: Gamma crosses the axis or self-intersects
    """
    lower_tip = float(cp.lower_tip[1])
    upper_tip = float(cp.upper_tip[1])
    _check_tips(lower_tip, upper_tip, k, l_guard)

    sample = sample_curve(cp, n_samples)
    gamma = sample.x
    _check_gamma(gamma)

    gamma_edges = np.linalg.norm(np.diff(gamma, axis=0), axis=1)
    h_axis = 0.5 * (gamma_edges[0] + gamma_edges[-1])

    upper_l = _axis_run(upper_tip, k.upper, h_axis)
    k_run = _axis_run(k.upper, k.lower, h_axis)
    lower_l = _axis_run(k.lower, lower_tip, h_axis)

    # upper_l starts at the upper tip, which is already the last Gamma vertex
    axis_ordinates = np.concatenate([upper_l[1:], k_run, lower_l])
    axis_vertices = np.stack([np.zeros_like(axis_ordinates), axis_ordinates], axis=1)

    vertices = np.vstack([gamma, axis_vertices])
    markers = np.concatenate([
        np.full(n_samples - 1, int(Marker.GAMMA)),
        np.full(len(upper_l), int(Marker.L)),
        np.full(len(k_run), int(Marker.K)),
        np.full(len(lower_l), int(Marker.L)),
    ])

    boundary = MarkedBoundary(
        vertices=vertices,
        markers=markers,
        tip_indices=(0, n_samples - 1),
        sample=sample,
        axis=k,
    )
    _check_closed(boundary)

    logger.debug(f"Assembled {boundary}")
    return boundary


def move_boundary(
    reference: MarkedBoundary,
    cp: ControlPolygon,
    l_guard: float = DEFAULT_L_GUARD,
) -> MarkedBoundary:
    """
    The boundary of cp with the vertex layout of reference.

    Gamma is resampled at the same parameters, K stays fixed and the L
    vertices are stretched linearly between K and the new tips, so vertex i
    of the result corresponds to vertex i of reference. Feasibility checks
    are those of assemble_boundary.

    Raises:
        InvalidParameterError: reference was not assembled from a curve
        InfeasibleTopologyError: a tip inside K or closer than l_guard to it
        InfeasibleGeometryError: Gamma crosses the axis or self-intersects
    """
    if reference.sample is None or reference.axis is None:
        raise InvalidParameterError("move_boundary needs a boundary assembled from a curve")
    k = reference.axis
    n_samples = len(reference.sample)
    old_lower = float(reference.vertices[0, 1])
    old_upper = float(reference.vertices[n_samples - 1, 1])
    lower_tip = float(cp.lower_tip[1])
    upper_tip = float(cp.upper_tip[1])
    _check_tips(lower_tip, upper_tip, k, l_guard)

    sample = sample_curve(cp, n_samples)
    _check_gamma(sample.x)

    y = reference.vertices[n_samples:, 1]
    stretched = np.where(
        y > k.upper,
        k.upper + (y - k.upper) * (upper_tip - k.upper) / (old_upper - k.upper),
        np.where(y < k.lower, k.lower - (k.lower - y) * (k.lower - lower_tip) / (k.lower - old_lower), y),
    )
    axis_vertices = np.stack([np.zeros_like(stretched), stretched], axis=1)

    boundary = MarkedBoundary(
        vertices=np.vstack([sample.x, axis_vertices]),
        markers=reference.markers,
        tip_indices=reference.tip_indices,
        sample=sample,
        axis=k,
    )
    _check_closed(boundary)
    return boundary


def _check_simple(b: MarkedBoundary) -> None:
    """
    O(n^2) segment-pair intersection test, adjacent edges excluded.

    Proper crossings and collinear overlaps (a segment end lying on another
    segment) both count.
    """
    p = b.vertices
    q = np.roll(p, -1, axis=0)
    n = p.shape[0]

    d = q - p
    scale = float(np.max(b.edge_lengths))
    tol = 1e-12 * scale * scale

    def orient(c: np.ndarray) -> np.ndarray:
        # [i, j]: side of point c_j relative to segment i
        return d[:, None, 0] * (c[None, :, 1] - p[:, None, 1]) - d[:, None, 1] * (c[None, :, 0] - p[:, None, 0])

    def on_segment(c: np.ndarray, side: np.ndarray) -> np.ndarray:
        # [i, j]: c_j lies on segment i
        along = d[:, None, 0] * (c[None, :, 0] - p[:, None, 0]) + d[:, None, 1] * (c[None, :, 1] - p[:, None, 1])
        length2 = np.sum(d * d, axis=1)[:, None]
        return (np.abs(side) <= tol) & (along >= 0.0) & (along <= length2)

    side_p, side_q = orient(p), orient(q)

    # segment j straddles the line of segment i
    straddles = (np.sign(side_p) * np.sign(side_q)) < 0
    crossing = straddles & straddles.T
    touching = on_segment(p, side_p) | on_segment(q, side_q)
    crossing |= touching | touching.T

    idx = np.arange(n)
    diff = np.abs(idx[:, None] - idx[None, :])
    adjacent = (diff <= 1) | (diff == n - 1)
    crossing &= ~adjacent

    if np.any(crossing):
        i, j = np.argwhere(crossing)[0]
        raise InfeasibleGeometryError(
            f"Boundary self-intersects: edge {i} ({b.markers[i]}) crosses edge {j} ({b.markers[j]})"
        )


def check_convexity(b: MarkedBoundary, tolerance: float = CONVEXITY_TOLERANCE) -> ConvexityReport:
    """
    Convexity diagnostic: minimum over vertices of the cross product of the
    incoming and outgoing edge vectors. Counterclockwise convex polylines have
    all cross products >= -tolerance.
    """
    p = b.vertices
    incoming = p - np.roll(p, 1, axis=0)
    outgoing = np.roll(p, -1, axis=0) - p
    cross = incoming[:, 0] * outgoing[:, 1] - incoming[:, 1] * outgoing[:, 0]
    # scale-free: normalise by edge lengths
    scale = np.linalg.norm(incoming, axis=1) * np.linalg.norm(outgoing, axis=1)
    cross = np.where(scale > 0.0, cross / np.where(scale > 0.0, scale, 1.0), 0.0)
    vertex = int(np.argmin(cross))
    min_cross = float(cross[vertex])
    return ConvexityReport(min_cross=min_cross, convex=min_cross >= -tolerance, vertex=vertex)


def reflect_across(points: np.ndarray, center: float) -> np.ndarray:
    """Reflection x2 -> 2 center - x2 across the perpendicular bisector of K"""
    out = np.array(points, dtype=float, copy=True)
    out[:, 1] = 2.0 * center - out[:, 1]
    return out


def polygon_boundary(vertices: np.ndarray, markers: np.ndarray) -> MarkedBoundary:
    """
    MarkedBoundary from an explicit counterclockwise polygon (verification
    domains such as the strip rectangle or a unit square).
    """
    boundary = MarkedBoundary(vertices=vertices, markers=markers)
    if boundary.signed_area <= 0.0:
        raise InvalidParameterError("polygon_boundary expects counterclockwise vertices")
    _check_simple(boundary)
    return boundary
