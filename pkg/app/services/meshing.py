"""
Meshing Service - conforming triangle meshes of the polygonal domain.

Uses Shewchuk's Triangle (python wrapper `triangle`) for the constrained
Delaunay triangulation with Ruppert quality refinement, then refines
triangles whose circumradius exceeds target_h through per-triangle area
constraints until every triangle meets the size target.

Node numbering: the boundary polyline vertices come first, so vertex i of the
MarkedBoundary is mesh node i. Each boundary edge remembers the polyline edge
it subdivides (edge_origin) and inherits that edge's marker.
"""

import logging

import numpy as np
import triangle

from app.domain.entities import MarkedBoundary, TriangleMesh
from app.domain.exceptions import (
    InfeasibleGeometryError,
    InvalidParameterError,
    MeshIntegrityError,
    MeshQualityError,
)

logger = logging.getLogger(__name__)

DEFAULT_TARGET_H = 0.02
DEFAULT_MIN_ANGLE = 20.0
MAX_REFINEMENT_PASSES = 12

# polygons with |area| below this fraction of perimeter^2 are degenerate
RELATIVE_AREA_TOLERANCE = 1e-10


def _switch_number(value: float) -> str:
    """Plain positional float for Triangle switches (no exponent notation)"""
    return np.format_float_positional(value, precision=16, unique=True, trim="-")


def _subdivide(b: MarkedBoundary, target_h: float):
    """
    Split every polyline edge into pieces no longer than target_h.

    Returns vertices (polyline vertices first), segments and segment origins.
    """
    verts = [b.vertices]
    segments = []
    origins = []
    n = b.n_edges
    next_index = n
    for i in range(n):
        j = (i + 1) % n
        start, end = b.vertices[i], b.vertices[j]
        pieces = max(1, int(np.ceil(b.edge_lengths[i] / target_h - 1e-9)))
        if pieces == 1:
            segments.append((i, j))
            origins.append(i)
            continue
        t = np.arange(1, pieces)[:, None] / pieces
        inner = start + t * (end - start)
        verts.append(inner)
        chain = [i] + list(range(next_index, next_index + pieces - 1)) + [j]
        next_index += pieces - 1
        segments.extend(zip(chain[:-1], chain[1:]))
        origins.extend([i] * pieces)
    return np.vstack(verts), np.asarray(segments, dtype=np.int32), np.asarray(origins, dtype=np.int32)


def _small_input_corners(b: MarkedBoundary, min_angle: float) -> np.ndarray:
    """Polyline vertices whose interior angle is below 3 * min_angle"""
    p = b.vertices
    to_prev = np.roll(p, 1, axis=0) - p
    to_next = np.roll(p, -1, axis=0) - p
    cos = np.sum(to_prev * to_next, axis=1) / (
        np.linalg.norm(to_prev, axis=1) * np.linalg.norm(to_next, axis=1)
    )
    angle = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    cross = to_next[:, 0] * to_prev[:, 1] - to_next[:, 1] * to_prev[:, 0]
    interior = np.where(cross >= 0.0, angle, 360.0 - angle)
    return np.flatnonzero(interior < 3.0 * min_angle)


def triangulate(
    b: MarkedBoundary,
    target_h: float = DEFAULT_TARGET_H,
    min_angle: float = DEFAULT_MIN_ANGLE,
    max_passes: int = MAX_REFINEMENT_PASSES,
) -> TriangleMesh:
    """
    Constrained Delaunay triangulation of the domain bounded by b.

    Every triangle ends with circumradius <= target_h and minimum angle >=
    min_angle. Triangles touching an input corner sharper than 3 * min_angle
    are exempt from the angle floor (Triangle cannot guarantee it there).

    Raises:
        InvalidParameterError: target_h <= 0
        InfeasibleGeometryError: near-zero polygon area
        MeshQualityError: size or angle targets not met within max_passes
    """
    if not target_h > 0.0:
        raise InvalidParameterError(f"target_h must be > 0, got {target_h}")

    perimeter = float(np.sum(b.edge_lengths))
    if abs(b.signed_area) <= RELATIVE_AREA_TOLERANCE * perimeter ** 2:
        raise InfeasibleGeometryError(
            f"Polygon area {b.signed_area:.3e} is degenerate for perimeter {perimeter:.3e}"
        )

    vertices, segments, origins = _subdivide(b, target_h)
    planar = dict(
        vertices=vertices,
        segments=segments,
        segment_markers=(origins + 1)[:, None],
    )
    max_area = 0.5 * target_h ** 2
    out = triangle.triangulate(planar, f"pq{_switch_number(min_angle)}a{_switch_number(max_area)}Q")

    for refinement in range(max_passes + 1):
        mesh = _build_mesh(b, out, target_h)
        oversized = mesh.circumradii > target_h * (1.0 + 1e-9)
        if not np.any(oversized):
            break
        if refinement == max_passes:
            raise MeshQualityError(
                f"{int(oversized.sum())} triangles still exceed circumradius {target_h} "
                f"after {max_passes} refinement passes"
            )
        logger.debug(f"Refinement pass {refinement + 1}: {int(oversized.sum())} oversized triangles")
        areas = np.abs(mesh.signed_areas)
        constraint = np.where(oversized, 0.5 * areas, -1.0)
        out = triangle.triangulate(
            dict(
                vertices=out["vertices"],
                triangles=out["triangles"],
                segments=out["segments"],
                segment_markers=out["segment_markers"],
                triangle_max_area=constraint,
            ),
            f"rpq{_switch_number(min_angle)}aQ",
        )

    _check_angle_floor(b, mesh, min_angle)
    logger.debug(f"Triangulated {mesh}")
    return mesh


def _check_angle_floor(b: MarkedBoundary, mesh: TriangleMesh, min_angle: float) -> None:
    exempt_nodes = _small_input_corners(b, min_angle)
    exempt = np.isin(mesh.triangles, exempt_nodes).any(axis=1)
    bad = (mesh.min_angles < min_angle - 1e-6) & ~exempt
    if np.any(bad):
        worst = float(mesh.min_angles[bad].min())
        raise MeshQualityError(
            f"{int(bad.sum())} triangles below the {min_angle} degree floor (worst {worst:.2f})"
        )


def _build_mesh(b: MarkedBoundary, out: dict, target_h: float) -> TriangleMesh:
    """TriangleMesh from Triangle output with counterclockwise triangles and oriented boundary edges"""
    nodes = np.asarray(out["vertices"], dtype=float)
    tris = np.asarray(out["triangles"], dtype=np.int64).copy()
    if nodes.shape[0] < b.n_edges or not np.array_equal(nodes[: b.n_edges], b.vertices):
        raise InfeasibleGeometryError(
            "Triangulation renumbered the boundary vertices (duplicate input points?)"
        )

    p = nodes[tris]
    twice_area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    flip = twice_area < 0.0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    segs = np.asarray(out["segments"], dtype=np.int64)
    origin = np.asarray(out["segment_markers"], dtype=np.int64).ravel() - 1
    if np.any(origin < 0) or np.any(origin >= b.n_edges):
        raise InfeasibleGeometryError("Triangle returned a segment outside the input boundary")

    owner = adjacent_triangles(tris, segs, nodes.shape[0])
    # orient each edge so the owning triangle lies to its left
    third = tris[owner].sum(axis=1) - segs.sum(axis=1)
    a, c, d = nodes[segs[:, 0]], nodes[segs[:, 1]], nodes[third]
    left = (c[:, 0] - a[:, 0]) * (d[:, 1] - a[:, 1]) - (c[:, 1] - a[:, 1]) * (d[:, 0] - a[:, 0])
    segs[left < 0.0] = segs[left < 0.0][:, ::-1]

    # deterministic order: along the polyline, then along each polyline edge
    start = b.vertices[origin]
    along = np.linalg.norm(nodes[segs[:, 0]] - start, axis=1)
    order = np.lexsort((along, origin))
    segs, origin = segs[order], origin[order]

    return TriangleMesh(
        nodes=nodes,
        triangles=tris,
        boundary_edges=segs,
        edge_markers=b.markers[origin],
        edge_origin=origin,
        target_h=target_h,
    )


def adjacent_triangles(triangles: np.ndarray, edges: np.ndarray, n_nodes: int) -> np.ndarray:
    """
    Index of the unique triangle adjacent to each boundary edge.

    Raises:
        MeshIntegrityError: an edge with zero or several adjacent triangles
    """
    tri_edges = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=0
    )
    tri_ids = np.tile(np.arange(triangles.shape[0]), 3)
    keys = np.min(tri_edges, axis=1) * n_nodes + np.max(tri_edges, axis=1)
    order = np.argsort(keys, kind="stable")
    keys, tri_ids = keys[order], tri_ids[order]

    query = np.min(edges, axis=1) * n_nodes + np.max(edges, axis=1)
    lo = np.searchsorted(keys, query, side="left")
    hi = np.searchsorted(keys, query, side="right")
    count = hi - lo
    bad = np.flatnonzero(count != 1)
    if bad.size:
        e = int(bad[0])
        raise MeshIntegrityError((int(edges[e, 0]), int(edges[e, 1])), int(count[e]))
    return tri_ids[lo]


def carry_boundary_nodes(mesh: TriangleMesh, old: MarkedBoundary, new: MarkedBoundary) -> np.ndarray:
    """
    Node positions (shape (N, 2)) with the boundary nodes of mesh moved from
    old to new.

    Polyline vertices take the new vertices; a node inserted on a polyline
    edge keeps its fraction of the way along that edge. Interior rows are
    left at their current position.

    Raises:
        InvalidParameterError: old and new have different vertex counts
    """
    n = old.n_edges
    if new.n_edges != n:
        raise InvalidParameterError(
            f"Cannot carry a mesh from {n} boundary vertices to {new.n_edges}"
        )
    positions = np.array(mesh.nodes, dtype=float, copy=True)
    positions[:n] = new.vertices
    for col in range(2):
        nodes = mesh.boundary_edges[:, col]
        inserted = nodes >= n
        nodes = nodes[inserted]
        i = mesh.edge_origin[inserted]
        j = (i + 1) % n
        t = np.linalg.norm(mesh.nodes[nodes] - old.vertices[i], axis=1) / old.edge_lengths[i]
        positions[nodes] = new.vertices[i] + t[:, None] * (new.vertices[j] - new.vertices[i])
    return positions


def refine_uniform(mesh: TriangleMesh) -> TriangleMesh:
    """
    Red refinement: split every triangle into four through edge midpoints.

    Boundary edges split in two and keep their marker and origin; existing
    node indices are unchanged and midpoint nodes are appended.
    """
    tris = mesh.triangles
    n = mesh.n_nodes
    all_edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=0)
    keys = np.min(all_edges, axis=1) * n + np.max(all_edges, axis=1)
    unique_keys, inverse = np.unique(keys, return_inverse=True)
    lo, hi = unique_keys // n, unique_keys % n
    midpoints = 0.5 * (mesh.nodes[lo] + mesh.nodes[hi])
    mid = n + inverse.reshape(3, -1).T  # [t, 0]=mid(01), [t, 1]=mid(12), [t, 2]=mid(20)

    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    m01, m12, m20 = mid[:, 0], mid[:, 1], mid[:, 2]
    new_tris = np.concatenate([
        np.stack([a, m01, m20], axis=1),
        np.stack([m01, b, m12], axis=1),
        np.stack([m20, m12, c], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])

    edges = mesh.boundary_edges
    edge_keys = np.min(edges, axis=1) * n + np.max(edges, axis=1)
    edge_mid = n + np.searchsorted(unique_keys, edge_keys)
    new_edges = np.empty((2 * edges.shape[0], 2), dtype=np.int64)
    new_edges[0::2] = np.stack([edges[:, 0], edge_mid], axis=1)
    new_edges[1::2] = np.stack([edge_mid, edges[:, 1]], axis=1)

    return TriangleMesh(
        nodes=np.vstack([mesh.nodes, midpoints]),
        triangles=new_tris,
        boundary_edges=new_edges,
        edge_markers=np.repeat(mesh.edge_markers, 2),
        edge_origin=np.repeat(mesh.edge_origin, 2),
        target_h=0.5 * mesh.target_h,
    )


def polygon_area(b: MarkedBoundary) -> float:
    """Shoelace area of the boundary polygon"""
    return abs(b.signed_area)
