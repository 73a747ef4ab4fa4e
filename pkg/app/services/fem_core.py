"""
FEM Core Service - P1 finite elements for the states, adjoints and functionals.

All solves go through one generic problem

    -Laplace(u) = f            in the domain
    u = g_D                    on Dirichlet nodes
    dn u + rho u = g           on the remaining boundary edges (weakly)

assembled with vectorized P1 element matrices (scipy.sparse COO -> CSR) and
solved by a direct sparse LU factorization after symmetric Dirichlet
elimination with boundary lifting. The named solvers below only choose the
boundary conditions and the source.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from app.domain.entities import BoundaryGradient, MarkedBoundary, ScalarField, TriangleMesh
from app.domain.exceptions import GeometrySyncError, InvalidParameterError, MeshQualityError, SolverError
from app.domain.value_objects import Marker, PenaltyParams
from app.services.meshing import adjacent_triangles

logger = logging.getLogger(__name__)

EdgeValue = Union[float, Callable[[np.ndarray], np.ndarray]]


# ============================================
# Penalization
# ============================================

def psi_eps(x1, p: PenaltyParams):
    """
    Penalization psi_eps(x1) = eps^-1 * max(1 - eps^-q x1, 0)^2.

    Nonincreasing on x1 >= 0 with support [0, eps^q]; psi_eps(0) = 1/eps.
    Accepts scalars or arrays.
    """
    arr = np.asarray(x1, dtype=float)
    if np.any(arr < 0.0):
        raise InvalidParameterError(f"psi_eps is defined for x1 >= 0, got min {arr.min()}")
    value = np.maximum(1.0 - arr / p.beta, 0.0) ** 2 / p.eps
    return float(value) if value.ndim == 0 else value


def psi_eps_derivative(x1, p: PenaltyParams):
    """d psi_eps / d x1 = -2 / (eps * beta) * max(1 - x1 / beta, 0), zero outside [0, beta]"""
    arr = np.asarray(x1, dtype=float)
    if np.any(arr < 0.0):
        raise InvalidParameterError(f"psi_eps is defined for x1 >= 0, got min {arr.min()}")
    value = -2.0 * np.maximum(1.0 - arr / p.beta, 0.0) / (p.eps * p.beta)
    return float(value) if value.ndim == 0 else value


# ============================================
# Boundary conditions
# ============================================

@dataclass(frozen=True, eq=False)
class BoundaryConditions:
    """
    Dirichlet node values plus per-boundary-edge Robin data (dn u + rho u = g).

    Edges whose nodes are all Dirichlet nodes have no effect; rho = g = 0 is
    the natural (homogeneous Neumann) condition.
    """

    dirichlet_nodes: np.ndarray
    dirichlet_values: np.ndarray
    flux: np.ndarray
    robin: np.ndarray

    @classmethod
    def from_markers(
        cls,
        mesh: TriangleMesh,
        dirichlet: Optional[Mapping[Marker, float]] = None,
        flux: Optional[Mapping[Marker, EdgeValue]] = None,
        robin: Optional[Mapping[Marker, EdgeValue]] = None,
    ) -> "BoundaryConditions":
        """
        Build conditions from marker -> value maps.

        Dirichlet values are applied in mapping order and later entries win at
        nodes shared by two runs, e.g. {L: 0, GAMMA: 0, K: 1} gives the K
        end nodes the value 1. Flux and Robin values are floats or callables
        of the edge midpoints.
        """
        values = {}
        for marker, value in (dirichlet or {}).items():
            for node in mesh.nodes_on(marker):
                values[int(node)] = float(value)
        nodes = np.array(sorted(values), dtype=np.int64)
        node_values = np.array([values[i] for i in nodes], dtype=float)

        return cls(
            dirichlet_nodes=nodes,
            dirichlet_values=node_values,
            flux=_edge_field(mesh, flux),
            robin=_edge_field(mesh, robin),
        )


def _edge_field(mesh: TriangleMesh, spec: Optional[Mapping[Marker, EdgeValue]]) -> np.ndarray:
    out = np.zeros(mesh.boundary_edges.shape[0])
    for marker, value in (spec or {}).items():
        edges = mesh.edges_with(marker)
        if callable(value):
            out[edges] = value(mesh.edge_midpoints[edges])
        else:
            out[edges] = float(value)
    return out


# ============================================
# Assembly and solve
# ============================================

class P1System:
    """
    Stiffness and mass matrices of one mesh plus the generic solve.

    Build one per mesh and pass it to the named solvers to reuse the assembly.
    """

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh

    @cached_property
    def _geometry(self):
        """Per triangle: area and the gradient helpers b, c (grad phi_i = (b_i, c_i) / 2A)"""
        p = self.mesh.nodes[self.mesh.triangles]
        x1, y1 = p[:, 0, 0], p[:, 0, 1]
        x2, y2 = p[:, 1, 0], p[:, 1, 1]
        x3, y3 = p[:, 2, 0], p[:, 2, 1]
        two_area = (x2 - x1) * (y3 - y1) - (y2 - y1) * (x3 - x1)
        if np.any(two_area <= 0.0):
            raise SolverError(f"{int(np.sum(two_area <= 0.0))} triangles have non-positive area")
        b = np.stack([y2 - y3, y3 - y1, y1 - y2], axis=1)
        c = np.stack([x3 - x2, x1 - x3, x2 - x1], axis=1)
        return 0.5 * two_area, b, c

    def _assemble(self, local: np.ndarray) -> sp.csr_matrix:
        tris = self.mesh.triangles
        n = self.mesh.n_nodes
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        return sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        area, b, c = self._geometry
        local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area)[:, None, None]
        return self._assemble(local)

    @cached_property
    def mass(self) -> sp.csr_matrix:
        area, _, _ = self._geometry
        pattern = (np.ones((3, 3)) + np.eye(3)) / 12.0
        return self._assemble(area[:, None, None] * pattern[None, :, :])

    def gradients(self, values: np.ndarray) -> np.ndarray:
        """Constant P1 gradient on every triangle, shape (T, 2)"""
        area, b, c = self._geometry
        u = values[self.mesh.triangles]
        return np.stack([np.sum(b * u, axis=1), np.sum(c * u, axis=1)], axis=1) / (2.0 * area)[:, None]

    def robin_matrix(self, rho: np.ndarray) -> sp.csr_matrix:
        """Edge mass rho * len / 6 * [[2, 1], [1, 2]] over the boundary edges"""
        edges = self.mesh.boundary_edges
        n = self.mesh.n_nodes
        weight = rho * self.mesh.edge_lengths / 6.0
        rows = np.concatenate([edges[:, 0], edges[:, 0], edges[:, 1], edges[:, 1]])
        cols = np.concatenate([edges[:, 0], edges[:, 1], edges[:, 0], edges[:, 1]])
        data = np.concatenate([2.0 * weight, weight, weight, 2.0 * weight])
        return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()

    def edge_load(self, g: np.ndarray) -> np.ndarray:
        """Load vector of integral_boundary g v, g constant per edge"""
        edges = self.mesh.boundary_edges
        load = np.zeros(self.mesh.n_nodes)
        half = 0.5 * g * self.mesh.edge_lengths
        np.add.at(load, edges[:, 0], half)
        np.add.at(load, edges[:, 1], half)
        return load

    def solve(
        self,
        bc: BoundaryConditions,
        source: Optional[np.ndarray] = None,
        name: str = "u",
    ) -> ScalarField:
        """
        Solve the generic problem with P1 source interpolant `source` (nodal values).

        Raises:
            SolverError: singular system or non-finite solution
        """
        n = self.mesh.n_nodes
        matrix = self.stiffness
        if np.any(bc.robin != 0.0):
            matrix = matrix + self.robin_matrix(bc.robin)
        rhs = self.edge_load(bc.flux)
        if source is not None:
            rhs = rhs + self.mass @ np.asarray(source, dtype=float)

        fixed = bc.dirichlet_nodes
        if fixed.size == 0 and not np.any(bc.robin > 0.0):
            raise SolverError(f"Problem for '{name}' has no Dirichlet or Robin condition (singular)")

        u = np.zeros(n)
        u[fixed] = bc.dirichlet_values
        free = np.setdiff1d(np.arange(n), fixed, assume_unique=True)
        if free.size:
            matrix = matrix.tocsr()
            lifted = rhs[free] - matrix[free][:, fixed] @ u[fixed]
            reduced = matrix[free][:, free].tocsc()
            try:
                u[free] = spla.splu(reduced).solve(lifted)
            except RuntimeError as e:
                raise SolverError(f"Linear solve for '{name}' failed: {e}") from e

        if not np.all(np.isfinite(u)):
            raise SolverError(f"Linear solve for '{name}' returned non-finite values")
        logger.debug(f"Solved '{name}': {free.size} unknowns, {fixed.size} Dirichlet nodes")
        return ScalarField(self.mesh, u, name)

    def residual(self, field: ScalarField, source: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Consistent nodal boundary fluxes r = K u - M f.

        At a node i on the boundary r_i approximates integral dn u phi_i; it
        vanishes at interior nodes of an exact discrete solution.
        """
        r = self.stiffness @ field.values
        if source is not None:
            r = r - self.mass @ np.asarray(source, dtype=float)
        return r


def _system(mesh: TriangleMesh, system: Optional[P1System]) -> P1System:
    if system is None:
        return P1System(mesh)
    if system.mesh is not mesh:
        raise InvalidParameterError("P1System was assembled on a different mesh")
    return system


def _require(mesh: TriangleMesh, *markers: Marker) -> None:
    for marker in markers:
        if mesh.edges_with(marker).size == 0:
            raise InvalidParameterError(f"Mesh has no {marker.label}-marked boundary edges")


# ============================================
# States and adjoints
# ============================================

def solve_dirichlet_state(mesh: TriangleMesh, system: Optional[P1System] = None) -> ScalarField:
    """u1: u = 1 on K, u = 0 on L and Gamma, harmonic inside"""
    _require(mesh, Marker.K)
    bc = BoundaryConditions.from_markers(
        mesh, dirichlet={Marker.L: 0.0, Marker.GAMMA: 0.0, Marker.K: 1.0}
    )
    return _system(mesh, system).solve(bc, name="u1")


def solve_mixed_state(
    mesh: TriangleMesh,
    neumann_datum: float = 1.0,
    system: Optional[P1System] = None,
) -> ScalarField:
    """u2: u = 1 on K, u = 0 on L, dn u = -neumann_datum on Gamma"""
    _require(mesh, Marker.K, Marker.L, Marker.GAMMA)
    bc = BoundaryConditions.from_markers(
        mesh,
        dirichlet={Marker.L: 0.0, Marker.K: 1.0},
        flux={Marker.GAMMA: -neumann_datum},
    )
    return _system(mesh, system).solve(bc, name="u2")


def robin_coefficients(mesh: TriangleMesh, p: PenaltyParams) -> Mapping[Marker, EdgeValue]:
    """
    Per-marker Robin coefficient psi_eps: the axis value 1/eps on the whole of
    every L edge and the midpoint value on Gamma edges.
    """
    return {
        Marker.L: psi_eps(0.0, p),
        Marker.GAMMA: lambda mid: psi_eps(np.maximum(mid[:, 0], 0.0), p),
    }


def solve_robin_state(
    mesh: TriangleMesh,
    p: PenaltyParams,
    system: Optional[P1System] = None,
    penalty_scale: float = 1.0,
) -> ScalarField:
    """
    u2eps: u = 1 on K and dn u + psi_eps u = -neumann_datum on the rest of
    the boundary. penalty_scale = 0 switches the penalization off, which
    reduces the problem to the pure Neumann datum on the boundary minus K.
    """
    _require(mesh, Marker.K)
    coefficients = robin_coefficients(mesh, p)
    if penalty_scale != 1.0:
        coefficients = {
            marker: (lambda mid, f=value: penalty_scale * f(mid)) if callable(value) else penalty_scale * value
            for marker, value in coefficients.items()
        }
    bc = BoundaryConditions.from_markers(
        mesh,
        dirichlet={Marker.K: 1.0},
        flux={Marker.L: -p.neumann_datum, Marker.GAMMA: -p.neumann_datum},
        robin=coefficients,
    )
    return _system(mesh, system).solve(bc, name="u2eps")


def adjoint_source(u1: ScalarField, u2eps: ScalarField) -> np.ndarray:
    """Nodal source 2 (u1 - u2eps) shared by both adjoints"""
    if u1.mesh is not u2eps.mesh:
        raise InvalidParameterError("Adjoint source fields live on different meshes")
    return 2.0 * (u1.values - u2eps.values)


def solve_adjoint_p1(
    mesh: TriangleMesh,
    u1: ScalarField,
    u2eps: ScalarField,
    system: Optional[P1System] = None,
) -> ScalarField:
    """p1: -Laplace p1 = 2 (u1 - u2eps), p1 = 0 on the whole boundary"""
    bc = BoundaryConditions.from_markers(
        mesh, dirichlet={Marker.K: 0.0, Marker.L: 0.0, Marker.GAMMA: 0.0}
    )
    return _system(mesh, system).solve(bc, source=adjoint_source(u1, u2eps), name="p1")


def solve_adjoint_p2(
    mesh: TriangleMesh,
    u1: ScalarField,
    u2eps: ScalarField,
    system: Optional[P1System] = None,
) -> ScalarField:
    """p2: -Laplace p2 = 2 (u1 - u2eps), p2 = 0 on K and L, dn p2 = 0 on Gamma"""
    bc = BoundaryConditions.from_markers(mesh, dirichlet={Marker.K: 0.0, Marker.L: 0.0})
    return _system(mesh, system).solve(bc, source=adjoint_source(u1, u2eps), name="p2")


def solve_adjoint_p2eps(
    mesh: TriangleMesh,
    u1: ScalarField,
    u2eps: ScalarField,
    p: PenaltyParams,
    system: Optional[P1System] = None,
) -> ScalarField:
    """
    Adjoint of the penalized state: -Laplace p2 = 2 (u1 - u2eps), p2 = 0 on K,
    dn p2 + psi_eps p2 = 0 on L and Gamma.

    Same operator as solve_robin_state, so on a given mesh it is the exact
    discrete adjoint of J_eps. It tends to solve_adjoint_p2 as eps -> 0.
    """
    _require(mesh, Marker.K)
    bc = BoundaryConditions.from_markers(
        mesh,
        dirichlet={Marker.K: 0.0},
        robin=robin_coefficients(mesh, p),
    )
    return _system(mesh, system).solve(bc, source=adjoint_source(u1, u2eps), name="p2")


# ============================================
# Boundary gradients
# ============================================

def recover_boundary_gradient(
    mesh: TriangleMesh,
    field: ScalarField,
    system: Optional[P1System] = None,
) -> BoundaryGradient:
    """
    Per boundary edge: the constant gradient of the unique adjacent triangle
    and its outward normal component.

    Raises:
        MeshIntegrityError: an edge without exactly one adjacent triangle
    """
    owner = adjacent_triangles(mesh.triangles, mesh.boundary_edges, mesh.n_nodes)
    grad = _system(mesh, system).gradients(field.values)[owner]
    normals = mesh.edge_normals
    return BoundaryGradient(
        grad=grad,
        dn=np.sum(grad * normals, axis=1),
        midpoints=mesh.edge_midpoints,
        lengths=mesh.edge_lengths,
        normals=normals,
        markers=mesh.edge_markers,
    )


# ============================================
# Functionals and norms
# ============================================

def functional_misfit(mesh: TriangleMesh, a: ScalarField, b: ScalarField) -> float:
    """
    integral (a - b)^2 by the 3-point edge-midpoint rule, exact for the
    quadratic integrand of P1 fields.
    """
    if a.mesh is not mesh or b.mesh is not mesh:
        raise InvalidParameterError("functional_misfit fields must live on the given mesh")
    d = (a.values - b.values)[mesh.triangles]
    mid = 0.5 * (d + np.roll(d, -1, axis=1))
    area = np.abs(mesh.signed_areas)
    return float(np.sum(area * np.sum(mid ** 2, axis=1) / 3.0))


def functional_J_eps(mesh: TriangleMesh, u1: ScalarField, u2eps: ScalarField) -> float:
    """Penalized shape functional J_eps = integral (u2eps - u1)^2"""
    return functional_misfit(mesh, u1, u2eps)


def _check_gamma_sync(b: MarkedBoundary, gamma_length: float) -> None:
    expected = b.run_length(Marker.GAMMA)
    if abs(gamma_length - expected) > 1e-9 * max(1.0, expected):
        raise GeometrySyncError(
            f"Gamma length of the field ({gamma_length:.12f}) differs from the boundary "
            f"({expected:.12f})"
        )


def functional_neumann_defect(
    b: MarkedBoundary,
    grad: BoundaryGradient,
    neumann_datum: float = 1.0,
) -> float:
    """integral_Gamma (dn u1 + neumann_datum)^2, one midpoint value per edge"""
    gamma = grad.on(Marker.GAMMA)
    _check_gamma_sync(b, float(np.sum(grad.lengths[gamma])))
    return float(np.sum((grad.dn[gamma] + neumann_datum) ** 2 * grad.lengths[gamma]))


def functional_dirichlet_defect(b: MarkedBoundary, u2eps: ScalarField) -> float:
    """integral_Gamma u2eps^2, exact for the piecewise linear trace"""
    mesh = u2eps.mesh
    gamma = mesh.edges_with(Marker.GAMMA)
    lengths = mesh.edge_lengths[gamma]
    _check_gamma_sync(b, float(np.sum(lengths)))
    ua = u2eps.values[mesh.boundary_edges[gamma, 0]]
    ub = u2eps.values[mesh.boundary_edges[gamma, 1]]
    return float(np.sum(lengths * (ua * ua + ua * ub + ub * ub) / 3.0))


def l2_norm(mesh: TriangleMesh, a: ScalarField, system: Optional[P1System] = None) -> float:
    """Discrete L2 norm sqrt(a^T M a)"""
    s = _system(mesh, system)
    return float(np.sqrt(max(a.values @ (s.mass @ a.values), 0.0)))


def h1_distance(
    mesh: TriangleMesh,
    a: ScalarField,
    b: ScalarField,
    system: Optional[P1System] = None,
) -> float:
    """Discrete H1 distance sqrt(d^T (K + M) d) with d = a - b"""
    s = _system(mesh, system)
    d = a.values - b.values
    return float(np.sqrt(max(d @ (s.stiffness @ d) + d @ (s.mass @ d), 0.0)))


def boundary_flux(
    mesh: TriangleMesh,
    field: ScalarField,
    source: Optional[np.ndarray] = None,
    system: Optional[P1System] = None,
) -> np.ndarray:
    """Residual-based consistent nodal fluxes (see P1System.residual)"""
    return _system(mesh, system).residual(field, source)


def move_mesh(
    mesh: TriangleMesh,
    boundary_positions: np.ndarray,
    system: Optional[P1System] = None,
) -> TriangleMesh:
    """
    Same connectivity with the boundary nodes at boundary_positions (shape
    (N, 2), only boundary rows read) and the interior nodes moved by the
    harmonic extension of the boundary displacement.

    Raises:
        MeshQualityError: the moved mesh has inverted or flat triangles
    """
    displacement = np.zeros((mesh.n_nodes, 2))
    nodes = mesh.boundary_nodes
    displacement[nodes] = boundary_positions[nodes] - mesh.nodes[nodes]
    moved = mesh.with_nodes(mesh.nodes + harmonic_extension(mesh, displacement, system))
    flipped = int(np.sum(moved.signed_areas <= 0.0))
    if flipped:
        raise MeshQualityError(f"Moving the mesh inverts {flipped} triangles")
    return moved


def harmonic_extension(
    mesh: TriangleMesh,
    boundary_displacement: np.ndarray,
    system: Optional[P1System] = None,
) -> np.ndarray:
    """
    Extend a displacement given at every boundary node (array of shape
    (N, 2), only boundary rows read) into the interior, one discrete Laplace
    problem per component.
    """
    s = _system(mesh, system)
    nodes = mesh.boundary_nodes
    out = np.zeros((mesh.n_nodes, 2))
    zeros = np.zeros(mesh.boundary_edges.shape[0])
    for comp in range(2):
        bc = BoundaryConditions(
            dirichlet_nodes=nodes,
            dirichlet_values=boundary_displacement[nodes, comp],
            flux=zeros,
            robin=zeros,
        )
        out[:, comp] = s.solve(bc, name=f"extension[{comp}]").values
    return out


def interpolate(mesh: TriangleMesh, func: Callable[[np.ndarray], np.ndarray], name: str = "u") -> ScalarField:
    """Nodal interpolant of func(nodes)"""
    return ScalarField(mesh, func(mesh.nodes), name)
