"""
Run artifact writers: CSV tables, SVG boundary drawings, mesh text and JSON reports.

All floats go through FLOAT_FORMAT so two runs with the same config write
byte-identical files.
"""

import csv
import logging
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np
from pydantic import BaseModel

from app.domain.entities import ControlPolygon, IterationRecord, MarkedBoundary, ScalarField, TriangleMesh
from app.domain.value_objects import Marker

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FLOAT_FORMAT = "%.12e"

ITERATION_COLUMNS = (
    "iterate",
    "j_eps",
    "alpha",
    "backtracks",
    "max_displacement",
    "kappa_lower",
    "kappa_upper",
    "kappa_extent",
    "convex",
    "neumann_defect",
    "dirichlet_defect",
)

SVG_COLORS = {Marker.K: "#d62728", Marker.L: "#2ca02c", Marker.GAMMA: "#1f77b4"}
SVG_SIZE = 480


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return FLOAT_FORMAT % float(value)


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """UTF-8, comma separated, header row, floats in FLOAT_FORMAT"""
    path = _prepare(path)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.debug(f"Wrote {path}")
    return path


# ============================================
# CSV tables
# ============================================

def write_iterations(path: PathLike, history: List[IterationRecord]) -> Path:
    rows = (
        (
            r.iterate,
            r.j_eps,
            r.alpha,
            r.backtracks,
            r.max_displacement,
            r.kappa_lower,
            r.kappa_upper,
            r.kappa_extent,
            r.convex,
            r.neumann_defect,
            r.dirichlet_defect,
        )
        for r in history
    )
    return write_csv(path, ITERATION_COLUMNS, rows)


def write_boundary(path: PathLike, boundary: MarkedBoundary) -> Path:
    """One row per vertex; marker is the marker of the edge leaving the vertex"""
    rows = (
        (float(v[0]), float(v[1]), Marker(int(m)).label)
        for v, m in zip(boundary.vertices, boundary.markers)
    )
    return write_csv(path, ("x1", "x2", "marker"), rows)


def write_control_points(path: PathLike, polygon: ControlPolygon) -> Path:
    rows = ((k, float(p[0]), float(p[1])) for k, p in enumerate(polygon.points))
    return write_csv(path, ("k", "x1", "x2"), rows)


def write_field(path: PathLike, field: ScalarField) -> Path:
    nodes = field.mesh.nodes
    rows = ((i, float(nodes[i, 0]), float(nodes[i, 1]), float(field.values[i])) for i in range(nodes.shape[0]))
    return write_csv(path, ("node", "x1", "x2", "value"), rows)


def write_mesh(path: PathLike, mesh: TriangleMesh) -> Path:
    """
    Plain text mesh:

        nodes N triangles T edges E
        N lines "x1 x2"
        T lines "i j k"
        E lines "i j marker"
    """
    path = _prepare(path)
    lines = [f"nodes {mesh.n_nodes} triangles {mesh.n_triangles} edges {mesh.boundary_edges.shape[0]}"]
    lines += [f"{FLOAT_FORMAT % x} {FLOAT_FORMAT % y}" for x, y in mesh.nodes]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    lines += [f"{i} {j} {int(m)}" for (i, j), m in zip(mesh.boundary_edges, mesh.edge_markers)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def write_json(path: PathLike, report: BaseModel) -> Path:
    path = _prepare(path)
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


# ============================================
# SVG
# ============================================

def _runs(boundary: MarkedBoundary, marker: Marker) -> List[np.ndarray]:
    """Maximal chains of consecutive edges with this marker, as vertex arrays"""
    n = boundary.n_edges
    hits = np.asarray(boundary.markers) == int(marker)
    if not np.any(hits):
        return []
    if np.all(hits):
        return [np.vstack([boundary.vertices, boundary.vertices[:1]])]
    # start right after an edge with another marker so no run wraps around
    first = int(np.flatnonzero(~hits)[0]) + 1
    runs, current = [], []
    for step in range(n):
        e = (first + step) % n
        if hits[e]:
            if not current:
                current.append(e)
            current.append((e + 1) % n)
        elif current:
            runs.append(boundary.vertices[current])
            current = []
    if current:
        runs.append(boundary.vertices[current])
    return runs


def boundary_svg(boundary: MarkedBoundary, title: str = "") -> str:
    """SVG document with the domain outline and one path per marker class"""
    v = boundary.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    scale = 0.9 * SVG_SIZE / max(float(np.max(hi - lo)), 1e-12)
    margin = 0.05 * SVG_SIZE

    def to_svg(points: np.ndarray) -> str:
        x = margin + (points[:, 0] - lo[0]) * scale
        y = SVG_SIZE - margin - (points[:, 1] - lo[1]) * scale
        return " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(x, y))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" '
        f'viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">',
    ]
    if title:
        parts.append(f"  <title>{title}</title>")
    parts.append(f'  <path id="domain" d="M {to_svg(v)} Z" fill="#f0f0f0" stroke="none"/>')
    for marker in Marker:
        runs = _runs(boundary, marker)
        if not runs:
            continue
        d = " ".join(f"M {to_svg(run)}" for run in runs)
        parts.append(
            f'  <path id="{marker.label}" d="{d}" fill="none" stroke="{SVG_COLORS[marker]}" stroke-width="2"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path: PathLike, boundary: MarkedBoundary, title: str = "") -> Path:
    path = _prepare(path)
    path.write_text(boundary_svg(boundary, title), encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path
