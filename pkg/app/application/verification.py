"""
Verification suites for the FEM core and the shape gradient.

FEM suites (verify-fem):
- strip exactness: u = 1 - x1 on (0,1) x (-b, b) is reproduced by the
  Dirichlet, Neumann and Robin variants with consistent data
- Robin reduction: the penalized problem with psi switched off equals the
  pure Neumann datum solve
- convergence order: manufactured quadratic solution under red refinement
- manufactured adjoint: -Laplace p = 2 on the unit disk, center value 1/2
- flux balance for the mixed state and for the second adjoint
- Galerkin symmetry of the assembled matrices

Gradient check (grad-check): the analytic dJ_eps(V) against a central finite
difference in which the mesh of the current domain is deformed (boundary
displacement extended harmonically), so no remeshing enters the quotient.
"""

import logging
from typing import Callable, Optional

import numpy as np

from app.application.reports import GradientCheckReport, GradientCheckRow, SuiteResult, VerificationReport
from app.application.shape_optimizer import DomainEvaluation, ShapeOptimizer
from app.config import RunConfig
from app.domain.entities import CurveSample, MarkedBoundary, ScalarField, TriangleMesh
from app.domain.exceptions import InvalidParameterError
from app.domain.value_objects import Marker
from app.services.boundary_model import polygon_boundary
from app.services.fem_core import (
    BoundaryConditions,
    P1System,
    adjoint_source,
    boundary_flux,
    functional_J_eps,
    harmonic_extension,
    interpolate,
    recover_boundary_gradient,
    solve_adjoint_p1,
    solve_adjoint_p2,
    solve_dirichlet_state,
    solve_mixed_state,
    solve_robin_state,
)
from app.services.meshing import refine_uniform, triangulate
from app.services.shape_calculus import directional_derivative, trace_at_points

logger = logging.getLogger(__name__)

STRIP_TOLERANCE = 1e-12
ORDER_THRESHOLD = 1.8
FLUX_TOLERANCE = 0.02
CENTER_TOLERANCE = 0.01
SYMMETRY_TOLERANCE = 1e-12
GRADIENT_TOLERANCE = 0.05


# ============================================
# Verification domains
# ============================================

def strip_boundary(half_height: float = 0.5) -> MarkedBoundary:
    """
    Rectangle (0, 1) x (-half_height, half_height): K on the left edge,
    Gamma on the right edge, L (natural condition) on top and bottom.
    """
    b = half_height
    vertices = np.array([[0.0, -b], [1.0, -b], [1.0, b], [0.0, b]])
    markers = np.array([Marker.L, Marker.GAMMA, Marker.L, Marker.K], dtype=np.int64)
    return polygon_boundary(vertices, markers)


def disk_boundary(radius: float = 1.0, h: float = 0.1) -> MarkedBoundary:
    """Regular polygon inscribed in the circle, all edges marked Gamma"""
    n = max(8, int(np.ceil(2.0 * np.pi * radius / h)))
    phi = 2.0 * np.pi * np.arange(n) / n
    vertices = radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    return polygon_boundary(vertices, np.full(n, int(Marker.GAMMA)))


def _one_minus_x1(points: np.ndarray) -> np.ndarray:
    return 1.0 - points[:, 0]


# ============================================
# FEM suites
# ============================================

def strip_exactness(h: float = 0.25) -> SuiteResult:
    """Max nodal error of the three boundary condition variants against 1 - x1"""
    mesh = triangulate(strip_boundary(), h)
    system = P1System(mesh)
    variants = {
        "dirichlet": BoundaryConditions.from_markers(mesh, dirichlet={Marker.GAMMA: 0.0, Marker.K: 1.0}),
        "neumann": BoundaryConditions.from_markers(
            mesh, dirichlet={Marker.K: 1.0}, flux={Marker.GAMMA: -1.0}
        ),
        # u = 0 on the right edge, so dn u + rho u = -1 for any rho
        "robin": BoundaryConditions.from_markers(
            mesh, dirichlet={Marker.K: 1.0}, flux={Marker.GAMMA: -1.0}, robin={Marker.GAMMA: 10.0}
        ),
    }
    exact = interpolate(mesh, _one_minus_x1).values
    errors = {name: float(np.max(np.abs(system.solve(bc, name=name).values - exact))) for name, bc in variants.items()}
    worst = max(errors.values())
    return SuiteResult(
        name="strip_exactness",
        passed=worst <= STRIP_TOLERANCE,
        value=worst,
        threshold=STRIP_TOLERANCE,
        detail=", ".join(f"{k}={v:.2e}" for k, v in errors.items()),
    )


def robin_reduction(mesh: TriangleMesh, config: RunConfig) -> SuiteResult:
    """Penalized state with psi = 0 against the Neumann datum solve"""
    penalty = config.penalty()
    system = P1System(mesh)
    switched_off = solve_robin_state(mesh, penalty, system, penalty_scale=0.0)
    neumann = system.solve(
        BoundaryConditions.from_markers(
            mesh,
            dirichlet={Marker.K: 1.0},
            flux={Marker.L: -penalty.neumann_datum, Marker.GAMMA: -penalty.neumann_datum},
        ),
        name="neumann",
    )
    diff = float(np.max(np.abs(switched_off.values - neumann.values)))
    return SuiteResult(name="robin_reduction", passed=diff <= STRIP_TOLERANCE, value=diff, threshold=STRIP_TOLERANCE)


def _quadratic(points: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 - points[:, 0] ** 2 - points[:, 1] ** 2)


def manufactured_errors(h: float = 0.25, refinements: int = 3) -> np.ndarray:
    """
    L2 errors of -Laplace u = 2 with u = (1 - r^2)/2 imposed on the boundary
    nodes, on a disk mesh and its uniform refinements.
    """
    mesh = triangulate(disk_boundary(1.0, h), h)
    errors = []
    for level in range(refinements + 1):
        system = P1System(mesh)
        bc = BoundaryConditions(
            dirichlet_nodes=mesh.boundary_nodes,
            dirichlet_values=_quadratic(mesh.nodes[mesh.boundary_nodes]),
            flux=np.zeros(mesh.boundary_edges.shape[0]),
            robin=np.zeros(mesh.boundary_edges.shape[0]),
        )
        u = system.solve(bc, source=np.full(mesh.n_nodes, 2.0), name=f"manufactured[{level}]")
        errors.append(_l2_error(mesh, u.values, _quadratic))
        if level < refinements:
            mesh = refine_uniform(mesh)
    return np.asarray(errors)


# 6-point triangle rule, exact for degree 4 (squared quadratic errors)
_QUAD_POINTS = np.array([
    [0.108103018168070, 0.445948490915965, 0.445948490915965],
    [0.445948490915965, 0.108103018168070, 0.445948490915965],
    [0.445948490915965, 0.445948490915965, 0.108103018168070],
    [0.816847572980459, 0.091576213509771, 0.091576213509771],
    [0.091576213509771, 0.816847572980459, 0.091576213509771],
    [0.091576213509771, 0.091576213509771, 0.816847572980459],
])
_QUAD_WEIGHTS = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)


def _l2_error(mesh: TriangleMesh, values: np.ndarray, exact: Callable[[np.ndarray], np.ndarray]) -> float:
    """L2 error of a P1 field against a smooth function"""
    corners = mesh.nodes[mesh.triangles]
    nodal = values[mesh.triangles]
    area = np.abs(mesh.signed_areas)
    total = 0.0
    for bary, weight in zip(_QUAD_POINTS, _QUAD_WEIGHTS):
        points = np.einsum("j,tjd->td", bary, corners)
        err = nodal @ bary - exact(points)
        total += weight * float(np.sum(area * err ** 2))
    return float(np.sqrt(total))


def convergence_order(h: float = 0.25, refinements: int = 3) -> SuiteResult:
    errors = manufactured_errors(h, refinements)
    orders = np.log2(errors[:-1] / errors[1:])
    worst = float(np.min(orders))
    return SuiteResult(
        name="convergence_order",
        passed=worst >= ORDER_THRESHOLD,
        value=worst,
        threshold=ORDER_THRESHOLD,
        detail="orders " + ", ".join(f"{o:.3f}" for o in orders),
    )


def manufactured_adjoint(h: float = 0.05) -> SuiteResult:
    """Adjoint solver with the source forced to 2: center value of (1 - r^2)/2"""
    mesh = triangulate(disk_boundary(1.0, h), h)
    ones = ScalarField(mesh, np.ones(mesh.n_nodes), "one")
    zeros = ScalarField(mesh, np.zeros(mesh.n_nodes), "zero")
    p = solve_adjoint_p1(mesh, ones, zeros)
    center = float(trace_at_points(p, np.zeros((1, 2)))[0])
    rel = abs(center - 0.5) / 0.5
    return SuiteResult(
        name="manufactured_adjoint",
        passed=rel <= CENTER_TOLERANCE,
        value=rel,
        threshold=CENTER_TOLERANCE,
        detail=f"center={center:.6f}",
    )


def only_on(mesh: TriangleMesh, marker: Marker) -> np.ndarray:
    """Nodes touched by marker edges and by no other boundary edge"""
    others = [m for m in Marker if m != marker]
    return np.setdiff1d(mesh.nodes_on(marker), mesh.nodes_on(*others))


def mixed_flux_balance(mesh: TriangleMesh, neumann_datum: float = 1.0) -> SuiteResult:
    """integral_Gamma dn u2 from residual fluxes against -datum |Gamma|"""
    system = P1System(mesh)
    u2 = solve_mixed_state(mesh, neumann_datum, system)
    flux = boundary_flux(mesh, u2, system=system)
    recovered = float(np.sum(flux[only_on(mesh, Marker.GAMMA)]))
    expected = -neumann_datum * float(np.sum(mesh.edge_lengths[mesh.edges_with(Marker.GAMMA)]))
    rel = abs(recovered - expected) / abs(expected)
    return SuiteResult(
        name="mixed_flux_balance",
        passed=rel <= FLUX_TOLERANCE,
        value=rel,
        threshold=FLUX_TOLERANCE,
        detail=f"recovered={recovered:.6e} expected={expected:.6e}",
    )


def adjoint_flux_balance(mesh: TriangleMesh, config: RunConfig) -> SuiteResult:
    """integral_{K u L} dn p2 against -integral 2 (u1 - u2eps)"""
    system = P1System(mesh)
    u1 = solve_dirichlet_state(mesh, system)
    u2eps = solve_robin_state(mesh, config.penalty(), system)
    p2 = solve_adjoint_p2(mesh, u1, u2eps, system)
    source = adjoint_source(u1, u2eps)
    flux = boundary_flux(mesh, p2, source, system)
    recovered = float(np.sum(flux[mesh.nodes_on(Marker.K, Marker.L)]))
    expected = -float(np.sum(system.mass @ source))
    rel = abs(recovered - expected) / max(abs(expected), 1e-300)
    return SuiteResult(
        name="adjoint_flux_balance",
        passed=rel <= FLUX_TOLERANCE,
        value=rel,
        threshold=FLUX_TOLERANCE,
        detail=f"recovered={recovered:.6e} expected={expected:.6e}",
    )


def galerkin_symmetry(mesh: TriangleMesh, config: RunConfig) -> SuiteResult:
    """Relative asymmetry of the stiffness plus Robin matrix"""
    system = P1System(mesh)
    bc = BoundaryConditions.from_markers(
        mesh, dirichlet={Marker.K: 1.0}, robin={Marker.L: 1.0 / config.eps, Marker.GAMMA: 1.0}
    )
    matrix = (system.stiffness + system.robin_matrix(bc.robin) + system.mass).tocsr()
    asym = abs(matrix - matrix.T).max() / abs(matrix).max()
    return SuiteResult(
        name="galerkin_symmetry",
        passed=asym <= SYMMETRY_TOLERANCE,
        value=float(asym),
        threshold=SYMMETRY_TOLERANCE,
    )


def verify_fem(config: Optional[RunConfig] = None) -> VerificationReport:
    """Run every FEM suite; the flux balances use the initial domain of config"""
    config = config or RunConfig()
    optimizer = ShapeOptimizer.from_config(config)
    ev = optimizer.evaluate(config.initial_polygon())

    report = VerificationReport()
    for suite in (
        strip_exactness,
        lambda: robin_reduction(ev.mesh, config),
        convergence_order,
        manufactured_adjoint,
        lambda: mixed_flux_balance(ev.mesh, config.neumann_datum),
        lambda: adjoint_flux_balance(ev.mesh, config),
        lambda: galerkin_symmetry(ev.mesh, config),
    ):
        result = suite()
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, f"{'✅' if result.passed else '❌'} {result.name}: {result.value:.3e} (threshold {result.threshold:.1e}) {result.detail}")
        report.suites.append(result)
    return report


# ============================================
# Shape gradient check
# ============================================

def cubic_bump(center: float, width: float, amplitude: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """C1 bump (1 - |r|)^2 (1 + 2|r|) with r = (s - center) / width, zero for |r| >= 1"""
    if not width > 0.0:
        raise InvalidParameterError(f"Bump width must be > 0, got {width}")

    def profile(s: np.ndarray) -> np.ndarray:
        r = np.abs((np.asarray(s, dtype=float) - center) / width)
        return np.where(r < 1.0, amplitude * (1.0 - r) ** 2 * (1.0 + 2.0 * r), 0.0)

    return profile


def boundary_displacement(mesh: TriangleMesh, sample: CurveSample, normal_speed: np.ndarray) -> np.ndarray:
    """
    Nodal displacement V = b(s) n on the Gamma mesh nodes, linear between
    samples on subdivided Gamma edges, zero on the rest of the boundary.
    """
    per_sample = normal_speed[:, None] * sample.normal
    disp = np.zeros((mesh.n_nodes, 2))
    n_s = len(sample)
    disp[:n_s] = per_sample

    for e in mesh.edges_with(Marker.GAMMA):
        origin = int(mesh.edge_origin[e])
        start, end = sample.x[origin], sample.x[origin + 1]
        span = float(np.linalg.norm(end - start))
        for node in mesh.boundary_edges[e]:
            if node < n_s:
                continue
            t = float(np.linalg.norm(mesh.nodes[node] - start)) / span
            disp[node] = (1.0 - t) * per_sample[origin] + t * per_sample[origin + 1]
    return disp


def perturbed_j_eps(ev: DomainEvaluation, extension: np.ndarray, t: float, config: RunConfig) -> float:
    """J_eps on the mesh moved by t * extension"""
    moved = ev.mesh.with_nodes(ev.mesh.nodes + t * extension)
    system = P1System(moved)
    u1 = solve_dirichlet_state(moved, system)
    u2eps = solve_robin_state(moved, config.penalty(), system)
    return functional_J_eps(moved, u1, u2eps)


def check_direction(
    ev: DomainEvaluation,
    density,
    profile: Callable[[np.ndarray], np.ndarray],
    t: float,
    config: RunConfig,
):
    """(analytic, finite difference) for the normal velocity profile(s) n"""
    sample = ev.boundary.sample
    speed = profile(sample.s)
    analytic = directional_derivative(density, sample, speed)
    if not np.any(speed):
        return analytic, 0.0
    extension = harmonic_extension(ev.mesh, boundary_displacement(ev.mesh, sample, speed), ev.system)
    j_plus = perturbed_j_eps(ev, extension, t, config)
    j_minus = perturbed_j_eps(ev, extension, -t, config)
    return analytic, (j_plus - j_minus) / (2.0 * t)


def gradient_check(
    config: RunConfig,
    n_directions: Optional[int] = None,
    t: Optional[float] = None,
    seed: Optional[int] = None,
    mesh_h: Optional[float] = None,
) -> GradientCheckReport:
    """
    Compare dJ_eps(V) from the gradient density with central differences for
    random cubic bumps supported inside Gamma.
    """
    n_directions = config.grad_directions if n_directions is None else n_directions
    t = config.grad_t if t is None else t
    mesh_h = config.target_h if mesh_h is None else mesh_h
    rng = np.random.default_rng(config.seed if seed is None else seed)

    optimizer = ShapeOptimizer.from_config(config, mesh_h)
    ev = optimizer.evaluate(config.initial_polygon())
    density = optimizer.gradient(ev).density

    report = GradientCheckReport(t=t, mesh_h=mesh_h, tolerance=GRADIENT_TOLERANCE)
    for d in range(n_directions):
        width = float(rng.uniform(0.1, 0.2))
        center = float(rng.uniform(width + 0.05, 1.0 - width - 0.05))
        analytic, fd = check_direction(ev, density, cubic_bump(center, width), t, config)
        rel = abs(analytic - fd) / abs(fd) if fd != 0.0 else abs(analytic)
        logger.info(
            f"Direction {d}: bump({center:.3f}, {width:.3f}) analytic={analytic:.6e} "
            f"fd={fd:.6e} rel={rel:.3e}"
        )
        report.rows.append(
            GradientCheckRow(
                direction=d,
                center=center,
                width=width,
                analytic=analytic,
                finite_difference=fd,
                relative_error=rel,
            )
        )
    return report


def tangential_defect(mesh: TriangleMesh) -> float:
    """Max tangential gradient of u1 on Gamma relative to its max gradient"""
    u1 = solve_dirichlet_state(mesh)
    grad = recover_boundary_gradient(mesh, u1)
    gamma = grad.on(Marker.GAMMA)
    return float(np.max(grad.tangential[gamma]) / np.max(np.linalg.norm(grad.grad[gamma], axis=1)))
