"""
Shape Calculus Service - shape gradient density, descent direction and projection.

The derivative of J_eps in the direction of a velocity field V is the
boundary integral

    dJ(V) = integral_Gamma g_Gamma V.n + integral_L g_L V.n

with q = dn u2eps = -datum - psi_eps u2eps on Gamma
    g_Gamma = dn p1 dn u1 + dt p2 dt u2eps + p2 (psi_eps q + u2eps dn psi_eps - H q) + (u1 - u2eps)^2
    g_L     = grad p1 . grad u1 - grad p2 . grad u2eps

For V = B_{k,m}(s) e_j at the control point p_k this gives the descent
direction dp_k = -integral_0^1 g(x(s)) B_{k,m}(s) n(s) |x'(s)| ds.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from app.domain.entities import (
    BoundaryGradient,
    ControlPolygon,
    CurveSample,
    GradientDensity,
    ScalarField,
)
from app.domain.exceptions import GeometrySyncError, InvalidParameterError
from app.domain.value_objects import AxisSpec, Marker, OptimizerParams, PenaltyParams
from app.services.bezier_geometry import basis_matrix
from app.services.fem_core import P1System, psi_eps, psi_eps_derivative, recover_boundary_gradient

logger = logging.getLogger(__name__)

# a sample closer than this (relative to the mesh size) to a node takes its value
NODE_MATCH_TOLERANCE = 1e-9
# barycentric coordinates above -tol count as inside
BARYCENTRIC_TOLERANCE = 1e-10
NEIGHBOUR_NODES = 8


@dataclass(frozen=True)
class FieldGradients:
    """Boundary gradients of the two states and the two adjoints"""

    u1: BoundaryGradient
    u2eps: BoundaryGradient
    p1: BoundaryGradient
    p2: BoundaryGradient

    @classmethod
    def recover(cls, u1, u2eps, p1, p2, system: Optional[P1System] = None) -> "FieldGradients":
        mesh = u1.mesh
        return cls(
            u1=recover_boundary_gradient(mesh, u1, system),
            u2eps=recover_boundary_gradient(mesh, u2eps, system),
            p1=recover_boundary_gradient(mesh, p1, system),
            p2=recover_boundary_gradient(mesh, p2, system),
        )


# ============================================
# Traces
# ============================================

def trace_at_points(field: ScalarField, points: np.ndarray) -> np.ndarray:
    """
    Values of a P1 field at arbitrary points of the mesh.

    Points on a node take the nodal value; other points are interpolated
    linearly in a triangle around the nearest nodes.

    Raises:
        GeometrySyncError: a point lies in no triangle of the mesh
    """
    mesh = field.mesh
    tree = cKDTree(mesh.nodes)
    k = min(NEIGHBOUR_NODES, mesh.n_nodes)
    dist, near = tree.query(points, k=k)
    dist = np.atleast_2d(dist)
    near = np.atleast_2d(near)

    values = np.empty(points.shape[0])
    exact = dist[:, 0] <= NODE_MATCH_TOLERANCE * mesh.target_h
    values[exact] = field.values[near[exact, 0]]

    for i in np.flatnonzero(~exact):
        candidates = np.flatnonzero(np.isin(mesh.triangles, near[i]).any(axis=1))
        value = _barycentric_value(field, candidates, points[i])
        if value is None:
            raise GeometrySyncError(
                f"Point ({points[i, 0]:.6f}, {points[i, 1]:.6f}) is not inside the mesh"
            )
        values[i] = value
    return values


def _barycentric_value(field: ScalarField, candidates: np.ndarray, point: np.ndarray) -> Optional[float]:
    mesh = field.mesh
    tris = mesh.triangles[candidates]
    a, b, c = (mesh.nodes[tris[:, j]] for j in range(3))
    v0, v1, v2 = b - a, c - a, point - a
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
    l0 = 1.0 - l1 - l2
    inside = np.flatnonzero(
        (l0 >= -BARYCENTRIC_TOLERANCE) & (l1 >= -BARYCENTRIC_TOLERANCE) & (l2 >= -BARYCENTRIC_TOLERANCE)
    )
    if inside.size == 0:
        return None
    j = int(inside[0])
    u = field.values[tris[j]]
    return float(l0[j] * u[0] + l1[j] * u[1] + l2[j] * u[2])


def _nodal_average(mesh, edges: np.ndarray, edge_values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Length-weighted average at `nodes` of per-edge values over the given edges"""
    ends = mesh.boundary_edges[edges]
    weight = mesh.edge_lengths[edges]
    total = np.zeros(mesh.n_nodes)
    norm = np.zeros(mesh.n_nodes)
    for col in range(2):
        np.add.at(total, ends[:, col], weight * edge_values)
        np.add.at(norm, ends[:, col], weight)
    if np.any(norm[nodes] <= 0.0):
        missing = nodes[norm[nodes] <= 0.0]
        raise GeometrySyncError(f"Gamma samples {missing[:5].tolist()} touch no Gamma mesh edge")
    return total[nodes] / norm[nodes]


# ============================================
# Gradient density
# ============================================

def gradient_density(
    sample: CurveSample,
    u1: ScalarField,
    u2eps: ScalarField,
    p1: ScalarField,
    p2: ScalarField,
    penalty: Optional[PenaltyParams] = None,
    gradients: Optional[FieldGradients] = None,
) -> GradientDensity:
    """
    Shape gradient density on Gamma (per sample) and on L (per mesh edge).

    On Gamma, with q = dn u2eps = -datum - psi u2eps and dn psi = psi'(x1) n1,

        g = dn p1 dn u1 + dt p2 dt u2eps + p2 (psi q + u2eps dn psi - H q) + (u1 - u2eps)^2

    where p2 is the Robin adjoint of solve_adjoint_p2eps. Normal and
    tangential derivatives are taken per Gamma mesh edge and averaged to the
    sample nodes weighted by edge length. Without a penalty psi = 0 and
    q = -1, which is the pure Neumann limit.

    Raises:
        GeometrySyncError: samples not found in the mesh
    """
    mesh = u1.mesh
    for f in (u2eps, p1, p2):
        if f.mesh is not mesh:
            raise InvalidParameterError("gradient_density fields must share one mesh")
    if gradients is None:
        gradients = FieldGradients.recover(u1, u2eps, p1, p2)

    gamma_edges = mesh.edges_with(Marker.GAMMA)
    l_edges = mesh.edges_with(Marker.L)

    def dot(a: BoundaryGradient, b: BoundaryGradient, edges: np.ndarray) -> np.ndarray:
        return np.sum(a.grad[edges] * b.grad[edges], axis=1)

    def tangential(field: ScalarField, edges: np.ndarray) -> np.ndarray:
        ends = mesh.boundary_edges[edges]
        return (field.values[ends[:, 1]] - field.values[ends[:, 0]]) / mesh.edge_lengths[edges]

    # both factors flip with the edge orientation, so the product does not
    edge_terms = gradients.p1.dn[gamma_edges] * gradients.u1.dn[gamma_edges] + tangential(
        p2, gamma_edges
    ) * tangential(u2eps, gamma_edges)

    # sample i is mesh node i when the mesh was built from this curve
    sample_nodes = np.arange(len(sample))
    if mesh.n_nodes < len(sample) or not np.allclose(
        mesh.nodes[sample_nodes], sample.x, rtol=0.0, atol=NODE_MATCH_TOLERANCE * mesh.target_h
    ):
        raise GeometrySyncError("Mesh nodes do not carry the current Gamma samples")
    products = _nodal_average(mesh, gamma_edges, edge_terms, sample_nodes)

    p2_trace = trace_at_points(p2, sample.x)
    u2_trace = trace_at_points(u2eps, sample.x)
    gap_trace = trace_at_points(u1 - u2eps, sample.x)

    x1 = np.maximum(sample.x[:, 0], 0.0)
    if penalty is None:
        psi = np.zeros(len(sample))
        dn_psi = np.zeros(len(sample))
        datum = 1.0
    else:
        psi = np.asarray(psi_eps(x1, penalty), dtype=float)
        dn_psi = np.asarray(psi_eps_derivative(x1, penalty), dtype=float) * sample.normal[:, 0]
        datum = penalty.neumann_datum
    q = -datum - psi * u2_trace

    gamma = products + p2_trace * (psi * q + u2_trace * dn_psi - sample.curvature * q) + gap_trace ** 2
    l_values = dot(gradients.p1, gradients.u1, l_edges) - dot(gradients.p2, gradients.u2eps, l_edges)

    return GradientDensity(
        gamma=gamma,
        l_values=l_values,
        l_midpoints=mesh.edge_midpoints[l_edges],
        l_lengths=mesh.edge_lengths[l_edges],
        l_normals=mesh.edge_normals[l_edges],
    )


def directional_derivative(density: GradientDensity, sample: CurveSample, normal_velocity: np.ndarray) -> float:
    """dJ(V) for a velocity supported on Gamma, given V.n at the samples"""
    return float(np.sum(sample.weights * density.gamma * normal_velocity))


# ============================================
# Descent direction and projection
# ============================================

TIP_INDICES = (0, 1, -2, -1)


def axis_flux(density: GradientDensity, k: AxisSpec) -> tuple[np.ndarray, np.ndarray]:
    """
    integral_L g_L n dL over the lower and the upper L run.

    A tip control point carries Bernstein weight 1 at its tip and its
    neighbour p_1 (resp. p_{m-1}) carries 0, so this is the whole L part of
    the tip descent direction. n = (-1, 0) on the axis, so only the x1
    component is ever nonzero.
    """
    lower = density.l_midpoints[:, 1] < k.center
    flux = (density.l_values * density.l_lengths)[:, None] * density.l_normals
    return flux[lower].sum(axis=0), flux[~lower].sum(axis=0)


def descent_direction(
    density: GradientDensity,
    sample: CurveSample,
    cp: ControlPolygon,
    k: Optional[AxisSpec] = None,
) -> np.ndarray:
    """
    Control point descent direction, shape (m+1, 2).

    dp_k = -sum_i w_i g_i B_{k,m}(s_i) n_i over the Gamma samples. When k is
    given the L runs add -integral_L g_L n dL to the two tips. The x1
    components of p_0, p_1, p_{m-1}, p_m are zeroed (tangency), so the tip
    ordinates move with the Gamma density near the tips.
    """
    if density.gamma.shape[0] != len(sample):
        raise InvalidParameterError(
            f"Density has {density.gamma.shape[0]} values for {len(sample)} samples"
        )
    basis = basis_matrix(cp.degree, sample.s, 0)
    flux = (sample.weights * density.gamma)[:, None] * sample.normal
    dp = -basis.T @ flux

    if k is not None and density.l_values.size:
        lower, upper = axis_flux(density, k)
        dp[0] -= lower
        dp[-1] -= upper

    dp[list(TIP_INDICES), 0] = 0.0
    return dp


def project_update(
    cp: ControlPolygon,
    dp: np.ndarray,
    alpha: float,
    k: AxisSpec,
    params: OptimizerParams,
) -> ControlPolygon:
    """
    Projected step: p_1k <- max(p_1k + alpha dp_1k, 0), p_2k <- p_2k + alpha dp_2k.

    Then the tips are kept on the axis and at least delta_l outside K, and
    p_1 (resp. p_{m-1}) is kept at least delta_l further from K than p_0
    (resp. p_m), so the result is always a valid ControlPolygon.
    """
    if not alpha > 0.0:
        raise InvalidParameterError(f"Step alpha must be > 0, got {alpha}")
    dp = np.asarray(dp, dtype=float)
    if dp.shape != cp.points.shape:
        raise InvalidParameterError(f"dp has shape {dp.shape}, expected {cp.points.shape}")

    points = cp.points + alpha * dp
    points[:, 0] = np.maximum(points[:, 0], 0.0)
    points[list(TIP_INDICES), 0] = 0.0

    guard = params.delta_l
    points[0, 1] = min(points[0, 1], k.lower - guard)
    points[-1, 1] = max(points[-1, 1], k.upper + guard)
    points[1, 1] = min(points[1, 1], points[0, 1] - guard)
    points[-2, 1] = max(points[-2, 1], points[-1, 1] + guard)
    return ControlPolygon(points)
