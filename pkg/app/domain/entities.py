"""
Domain Entities - the geometric and numerical objects the solver passes around.

Entities own their arrays and enforce the invariants other layers rely on:
- ControlPolygon: the optimization variables (tangency, half-plane feasibility)
- CurveJet / CurveSample: differential geometry of the free boundary
- MarkedBoundary: closed counterclockwise boundary with K / L / Gamma markers
- TriangleMesh: conforming P1 mesh with oriented, marked boundary edges
- ScalarField: one nodal value per mesh node
- BoundaryGradient / GradientDensity: boundary traces used by the shape gradient
- IterationRecord / OptimizerState: the optimizer's history

Arrays are copied and marked read-only on construction, so an entity handed to
another layer cannot be mutated behind its back.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional

import numpy as np

from .exceptions import InvalidParameterError
from .value_objects import AxisSpec, Marker


def _frozen(array, dtype=float) -> np.ndarray:
    """Copy into a contiguous read-only array"""
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


# ============================================
# Free boundary parameterization
# ============================================

@dataclass(frozen=True, eq=False)
class ControlPolygon:
    """
    The m+1 Bezier control points p_k = (p_1k, p_2k) of the free boundary.

    Invariants (enforced here):
    1. m >= 3, so the four tip points p_0, p_1, p_{m-1}, p_m exist
    2. p_0, p_1, p_{m-1}, p_m lie on the axis {x1 = 0} (tangency at the tips)
    3. p_1k >= 0 for every k (half-plane feasibility)
    4. p_1 != p_0 and p_m != p_{m-1} (tip tangents are defined)

    Points run from the lower tip (s = 0) to the upper tip (s = 1), so the
    curve is traversed counterclockwise around the domain.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidParameterError(
                f"ControlPolygon.points must have shape (m+1, 2), got {pts.shape}"
            )
        m = pts.shape[0] - 1
        if m < 3:
            raise InvalidParameterError(f"ControlPolygon degree must be >= 3, got {m}")
        tips = [0, 1, m - 1, m]
        if np.any(pts[tips, 0] != 0.0):
            raise InvalidParameterError(
                f"Tip control points must lie on x1 = 0, got x1 = {pts[tips, 0].tolist()}"
            )
        if np.any(pts[:, 0] < 0.0):
            k = int(np.argmin(pts[:, 0]))
            raise InvalidParameterError(
                f"Control point {k} violates x1 >= 0 (x1 = {pts[k, 0]:.3e})"
            )
        if np.linalg.norm(pts[1] - pts[0]) <= 0.0 or np.linalg.norm(pts[m] - pts[m - 1]) <= 0.0:
            raise InvalidParameterError("Consecutive tip control points must not coincide")
        object.__setattr__(self, "points", pts)

    @property
    def degree(self) -> int:
        """Bezier degree m"""
        return self.points.shape[0] - 1

    @property
    def lower_tip(self) -> np.ndarray:
        """Lower tip p_0, on the axis"""
        return self.points[0]

    @property
    def upper_tip(self) -> np.ndarray:
        """Upper tip p_m, on the axis"""
        return self.points[-1]

    def displacement_from(self, other: "ControlPolygon") -> np.ndarray:
        """Per control point Euclidean displacement |p_k - q_k|"""
        if other.degree != self.degree:
            raise InvalidParameterError(
                f"Cannot compare polygons of degree {self.degree} and {other.degree}"
            )
        return np.linalg.norm(self.points - other.points, axis=1)

    def __repr__(self) -> str:
        return (
            f"ControlPolygon(m={self.degree}, tips=({self.lower_tip[1]:.4f}, "
            f"{self.upper_tip[1]:.4f}))"
        )


@dataclass(frozen=True)
class CurveJet:
    """
    Differential geometry of the curve at one parameter value.

    tangent and normal are unit vectors, normal points out of the domain and
    curvature is the geometric (arc-length) curvature, positive where the
    domain is locally convex.
    """

    s: float
    x: np.ndarray
    dx: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    curvature: float
    speed: float


@dataclass(frozen=True, eq=False)
class CurveSample:
    """
    The curve sampled at uniformly spaced parameters, stored as arrays.

    weights[i] is the composite trapezoidal weight of s_i times |x'(s_i)|, so
    sum(f(x_i) * weights[i]) approximates the arc-length integral of f.
    """

    s: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    ddx: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    curvature: np.ndarray
    speed: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for name in ("s", "x", "dx", "ddx", "tangent", "normal", "curvature", "speed", "weights"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def __len__(self) -> int:
        return self.s.shape[0]

    def jet(self, i: int) -> CurveJet:
        """CurveJet of the i-th sample"""
        return CurveJet(
            s=float(self.s[i]),
            x=self.x[i],
            dx=self.dx[i],
            tangent=self.tangent[i],
            normal=self.normal[i],
            curvature=float(self.curvature[i]),
            speed=float(self.speed[i]),
        )

    @property
    def jets(self) -> List[CurveJet]:
        """All samples as CurveJet objects"""
        return [self.jet(i) for i in range(len(self))]

    @property
    def arc_length(self) -> float:
        """Trapezoidal arc length of the sampled curve"""
        return float(np.sum(self.weights))


# ============================================
# Boundary and mesh
# ============================================

@dataclass(frozen=True, eq=False)
class MarkedBoundary:
    """
    Closed counterclockwise polyline bounding the domain.

    Edge i joins vertices[i] and vertices[(i + 1) % N] and carries markers[i].
    When built from a Bezier curve, vertices[0..n_samples-1] are the Gamma
    samples (lower tip to upper tip), tip_indices == (0, n_samples - 1) and
    sample holds the matching jets.
    """

    vertices: np.ndarray
    markers: np.ndarray
    tip_indices: tuple = (0, 0)
    sample: Optional[CurveSample] = None
    axis: Optional[AxisSpec] = None

    def __post_init__(self):
        verts = _frozen(self.vertices)
        marks = _frozen(self.markers, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise InvalidParameterError(
                f"MarkedBoundary.vertices must have shape (N>=3, 2), got {verts.shape}"
            )
        if marks.shape != (verts.shape[0],):
            raise InvalidParameterError(
                f"MarkedBoundary needs one marker per edge: {marks.shape[0]} markers "
                f"for {verts.shape[0]} edges"
            )
        valid = {int(m) for m in Marker}
        if not set(np.unique(marks).tolist()) <= valid:
            raise InvalidParameterError(f"Unknown boundary markers in {np.unique(marks).tolist()}")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "markers", marks)

    @property
    def n_edges(self) -> int:
        return self.vertices.shape[0]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        """Length of every polyline edge"""
        nxt = np.roll(self.vertices, -1, axis=0)
        return np.linalg.norm(nxt - self.vertices, axis=1)

    @cached_property
    def signed_area(self) -> float:
        """Shoelace area, positive for counterclockwise polylines"""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def run_length(self, marker: Marker) -> float:
        """Total length of the edges carrying marker"""
        return float(np.sum(self.edge_lengths[self.markers == int(marker)]))

    def edges_with(self, marker: Marker) -> np.ndarray:
        """Indices of the edges carrying marker"""
        return np.flatnonzero(self.markers == int(marker))

    @property
    def gamma_points(self) -> np.ndarray:
        """Vertices of the Gamma run, lower tip to upper tip"""
        lo, hi = self.tip_indices
        return self.vertices[lo:hi + 1]

    def __repr__(self) -> str:
        return (
            f"MarkedBoundary(vertices={self.n_edges}, "
            f"K={self.run_length(Marker.K):.4f}, L={self.run_length(Marker.L):.4f}, "
            f"Gamma={self.run_length(Marker.GAMMA):.4f})"
        )


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """
    Conforming triangle mesh of the domain.

    boundary_edges are oriented so the domain lies to their left (outward
    normal = (dy, -dx) / length). edge_origin[e] is the index of the input
    polyline edge that boundary edge e subdivides.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_markers: np.ndarray
    edge_origin: np.ndarray
    target_h: float

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes))
        object.__setattr__(self, "triangles", _frozen(self.triangles, dtype=np.int64))
        object.__setattr__(self, "boundary_edges", _frozen(self.boundary_edges, dtype=np.int64))
        object.__setattr__(self, "edge_markers", _frozen(self.edge_markers, dtype=np.int64))
        object.__setattr__(self, "edge_origin", _frozen(self.edge_origin, dtype=np.int64))
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise InvalidParameterError(
                f"TriangleMesh.triangles must have shape (T, 3), got {self.triangles.shape}"
            )
        if self.edge_markers.shape[0] != self.boundary_edges.shape[0]:
            raise InvalidParameterError("One marker is required per boundary edge")

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        """Signed triangle areas (positive for counterclockwise triangles)"""
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def circumradii(self) -> np.ndarray:
        """Circumradius R = abc / (4 area) of every triangle"""
        p = self.nodes[self.triangles]
        a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
        b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
        c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
        return a * b * c / (4.0 * np.abs(self.signed_areas))

    @cached_property
    def min_angles(self) -> np.ndarray:
        """Smallest interior angle of every triangle, in degrees"""
        p = self.nodes[self.triangles]
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cos = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
        return np.min(np.stack(angles, axis=1), axis=1)

    @cached_property
    def edge_vectors(self) -> np.ndarray:
        """Boundary edge vectors, end minus start"""
        return self.nodes[self.boundary_edges[:, 1]] - self.nodes[self.boundary_edges[:, 0]]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edge_vectors, axis=1)

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Outward unit normal of every boundary edge"""
        d = self.edge_vectors
        return np.stack([d[:, 1], -d[:, 0]], axis=1) / self.edge_lengths[:, None]

    @cached_property
    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[self.boundary_edges[:, 0]] + self.nodes[self.boundary_edges[:, 1]])

    def edges_with(self, *markers: Marker) -> np.ndarray:
        """Indices of the boundary edges carrying any of markers"""
        return np.flatnonzero(np.isin(self.edge_markers, [int(m) for m in markers]))

    def nodes_on(self, *markers: Marker) -> np.ndarray:
        """Sorted node indices touched by boundary edges carrying any of markers"""
        return np.unique(self.boundary_edges[self.edges_with(*markers)].ravel())

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges.ravel())

    def with_nodes(self, nodes: np.ndarray) -> "TriangleMesh":
        """Same connectivity with moved nodes (used for mesh deformation)"""
        return TriangleMesh(
            nodes=nodes,
            triangles=self.triangles,
            boundary_edges=self.boundary_edges,
            edge_markers=self.edge_markers,
            edge_origin=self.edge_origin,
            target_h=self.target_h,
        )

    def __repr__(self) -> str:
        return (
            f"TriangleMesh(nodes={self.n_nodes}, triangles={self.n_triangles}, "
            f"edges={self.boundary_edges.shape[0]}, h={self.target_h})"
        )


# ============================================
# Fields and boundary traces
# ============================================

@dataclass(frozen=True, eq=False)
class ScalarField:
    """P1 field: one value per mesh node"""

    mesh: TriangleMesh
    values: np.ndarray
    name: str = "u"

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.mesh.n_nodes,):
            raise InvalidParameterError(
                f"ScalarField '{self.name}' has {vals.shape[0]} values for "
                f"{self.mesh.n_nodes} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise InvalidParameterError(f"ScalarField '{self.name}' has non-finite values")
        object.__setattr__(self, "values", vals)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        if other.mesh is not self.mesh:
            raise InvalidParameterError("Fields live on different meshes")
        return ScalarField(self.mesh, self.values - other.values, f"{self.name}-{other.name}")

    def __repr__(self) -> str:
        return (
            f"ScalarField({self.name}, min={self.values.min():.4g}, "
            f"max={self.values.max():.4g})"
        )


@dataclass(frozen=True, eq=False)
class BoundaryGradient:
    """
    Per boundary edge: the P1 gradient of the adjacent triangle and its
    outward normal component, with edge geometry and marker.
    """

    grad: np.ndarray
    dn: np.ndarray
    midpoints: np.ndarray
    lengths: np.ndarray
    normals: np.ndarray
    markers: np.ndarray

    def on(self, marker: Marker) -> np.ndarray:
        """Edge indices carrying marker"""
        return np.flatnonzero(self.markers == int(marker))

    @property
    def tangential(self) -> np.ndarray:
        """Norm of the tangential part grad - (dn) n"""
        return np.linalg.norm(self.grad - self.dn[:, None] * self.normals, axis=1)


@dataclass(frozen=True, eq=False)
class GradientDensity:
    """
    Shape-gradient density.

    gamma: one value per Gamma sample,
           dn p1 dn u1 + dt p2 dt u2eps + p2 (psi q + u2eps dn psi - H q) + (u1 - u2eps)^2
           with q = dn u2eps on Gamma
    l_values: one value per L mesh edge, grad p1 . grad u1 - grad p2 . grad u2eps
    """

    gamma: np.ndarray
    l_values: np.ndarray
    l_midpoints: np.ndarray
    l_lengths: np.ndarray
    l_normals: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.gamma)) and np.all(np.isfinite(self.l_values))):
            raise InvalidParameterError("GradientDensity has non-finite values")


# ============================================
# Optimizer history
# ============================================

@dataclass(frozen=True)
class IterationRecord:
    """One accepted iterate as written to the iteration log"""

    iterate: int
    j_eps: float
    alpha: float
    backtracks: int
    max_displacement: float
    kappa_lower: float
    kappa_upper: float
    convex: bool
    neumann_defect: float
    dirichlet_defect: float

    @property
    def kappa_extent(self) -> float:
        """Half of the tip-to-tip ordinate distance"""
        return 0.5 * (self.kappa_lower + self.kappa_upper)


@dataclass
class OptimizerState:
    """
    Mutable optimizer state.

    history holds one IterationRecord per accepted iterate (iterate 0 is the
    initial domain with alpha = 0). baseline_displacement is
    max_k |p_k^(1) - p_k^(0)|, set after the first accepted step.
    """

    iterate: int
    polygon: ControlPolygon
    j_eps: float
    alpha: float = 0.0
    history: List[IterationRecord] = field(default_factory=list)
    baseline_displacement: Optional[float] = None
    status: str = "running"
    eps: Optional[float] = None

    @property
    def j_history(self) -> List[float]:
        return [r.j_eps for r in self.history]

    @property
    def finished(self) -> bool:
        return self.status != "running"

    def __repr__(self) -> str:
        return (
            f"OptimizerState(l={self.iterate}, J={self.j_eps:.4e}, "
            f"status={self.status}, records={len(self.history)})"
        )
