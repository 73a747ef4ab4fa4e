"""
Shape Optimizer - gradient projection on the Bezier control points.

One outer iteration:
    assemble boundary -> mesh -> solve u1, u2eps -> J_eps
    -> solve p1, p2 -> gradient density -> descent direction
    -> backtracking line search on alpha = mu * eta^a -> projected update

Trial polygons of the line search are evaluated on the current mesh moved
to the trial boundary, so J_eps is continuous in the step length; a fresh
mesh is built only when the moved one inverts or degrades. The loop stops when the
largest control point displacement falls below tau_r times the displacement
of the first accepted step.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional

import numpy as np

from app.config import RunConfig
from app.domain.entities import (
    ControlPolygon,
    GradientDensity,
    IterationRecord,
    MarkedBoundary,
    OptimizerState,
    ScalarField,
    TriangleMesh,
)
from app.domain.exceptions import (
    DegenerateParameterizationError,
    DomainError,
    GeometrySyncError,
    InfeasibleGeometryError,
    InfeasibleTopologyError,
    LineSearchError,
    MeshIntegrityError,
    MeshQualityError,
    OptimizationFailedError,
    SolverError,
)
from app.domain.value_objects import AxisSpec, OptimizerParams, PenaltyParams
from app.services.boundary_model import ConvexityReport, assemble_boundary, check_convexity, move_boundary
from app.services.fem_core import (
    P1System,
    functional_dirichlet_defect,
    functional_J_eps,
    functional_misfit,
    functional_neumann_defect,
    move_mesh,
    recover_boundary_gradient,
    solve_adjoint_p1,
    solve_adjoint_p2eps,
    solve_dirichlet_state,
    solve_mixed_state,
    solve_robin_state,
)
from app.services.meshing import DEFAULT_MIN_ANGLE, DEFAULT_TARGET_H, carry_boundary_nodes, triangulate
from app.services.shape_calculus import FieldGradients, descent_direction, gradient_density, project_update

logger = logging.getLogger(__name__)

# failures of a trial geometry that make the line search try a shorter step
TRIAL_FAILURES = (
    InfeasibleTopologyError,
    InfeasibleGeometryError,
    DegenerateParameterizationError,
    MeshQualityError,
    MeshIntegrityError,
    SolverError,
    GeometrySyncError,
)

# a moved mesh is replaced by a fresh one when an angle drops below
# MOVED_ANGLE_RATIO * min_angle or a circumradius exceeds MOVED_SIZE_RATIO * mesh_h
MOVED_ANGLE_RATIO = 0.5
MOVED_SIZE_RATIO = 2.0


@dataclass(eq=False)
class DomainEvaluation:
    """Everything computed for one control polygon"""

    polygon: ControlPolygon
    boundary: MarkedBoundary
    mesh: TriangleMesh
    system: P1System
    u1: ScalarField
    u2eps: ScalarField
    j_eps: float
    neumann_defect: float
    dirichlet_defect: float
    convexity: ConvexityReport


@dataclass(eq=False)
class GradientEvaluation:
    """Adjoints, density and descent direction at one evaluated domain"""

    p1: ScalarField
    p2: ScalarField
    gradients: FieldGradients
    density: GradientDensity
    direction: np.ndarray

    @property
    def predicted_decrease(self) -> float:
        """First-order change of J along the direction, -sum |dp_k|^2"""
        return -float(np.sum(self.direction ** 2))


@dataclass
class LineSearchResult:
    alpha: float
    backtracks: int
    candidate: Any
    j_next: float
    evaluation: Any = None
    rejected: List[str] = field(default_factory=list)


def _coordinates(x) -> np.ndarray:
    return x.points if isinstance(x, ControlPolygon) else np.asarray(x, dtype=float)


def line_search(
    cp,
    dp,
    params: OptimizerParams,
    evaluate: Callable[[Any], Any],
    j_current: float,
    project: Optional[Callable[[Any, Any, float], Any]] = None,
) -> LineSearchResult:
    """
    Smallest a >= 0 such that alpha = mu * eta^a passes the sufficient decrease test

        J(x_next) - J(x) <= -(alpha / lam) * sum_k |x_next_k - x_k|^2

    evaluate returns either a float or an object with a j_eps attribute.
    project(x, dp, alpha) defaults to x + alpha * dp. Trial geometries that
    cannot be assembled, meshed or solved count as rejected trials.

    Raises:
        LineSearchError: no accepted step with a <= max_backtracks
    """
    if project is None:
        project = lambda x, d, alpha: np.asarray(x, dtype=float) + alpha * np.asarray(d, dtype=float)  # noqa: E731

    rejected = []
    start = _coordinates(cp)
    for a in range(params.max_backtracks + 1):
        alpha = params.step(a)
        candidate = project(cp, dp, alpha)
        try:
            outcome = evaluate(candidate)
        except TRIAL_FAILURES as e:
            logger.warning(f"Trial a={a} (alpha={alpha:.3e}) rejected: {e}")
            rejected.append(f"a={a}: {e}")
            continue
        j_next = float(getattr(outcome, "j_eps", outcome))
        moved = float(np.sum((_coordinates(candidate) - start) ** 2))
        bound = -(alpha / params.lam) * moved
        logger.debug(
            f"Trial a={a} alpha={alpha:.3e}: J={j_next:.6e} dJ={j_next - j_current:.3e} bound={bound:.3e}"
        )
        if j_next - j_current <= bound and moved > 0.0:
            return LineSearchResult(
                alpha=alpha,
                backtracks=a,
                candidate=candidate,
                j_next=j_next,
                evaluation=outcome if hasattr(outcome, "j_eps") else None,
                rejected=rejected,
            )
    raise LineSearchError(
        f"No step passed the sufficient decrease test within {params.max_backtracks} backtracks"
    )


class ShapeOptimizer:
    """
    Drives the outer loop for one axis segment K and one penalization.

    on_iterate(state, evaluation) is called after every accepted iterate
    (and for the initial domain) so callers can write snapshots.
    """

    def __init__(
        self,
        axis: AxisSpec,
        penalty: PenaltyParams,
        params: OptimizerParams = OptimizerParams(),
        n_samples: int = 400,
        mesh_h: float = DEFAULT_TARGET_H,
        min_angle: float = DEFAULT_MIN_ANGLE,
        on_iterate: Optional[Callable[[OptimizerState, DomainEvaluation], None]] = None,
    ):
        self.axis = axis
        self.penalty = penalty
        self.params = params
        self.n_samples = n_samples
        self.mesh_h = mesh_h
        self.min_angle = min_angle
        self.on_iterate = on_iterate
        self.last_evaluation: Optional[DomainEvaluation] = None

    @classmethod
    def from_config(
        cls,
        config: RunConfig,
        mesh_h: Optional[float] = None,
        on_iterate: Optional[Callable[[OptimizerState, DomainEvaluation], None]] = None,
    ) -> "ShapeOptimizer":
        """Optimizer for a RunConfig, optionally with a different mesh size"""
        return cls(
            config.axis(),
            config.penalty(),
            config.optimizer_params(),
            config.n_samples,
            config.target_h if mesh_h is None else mesh_h,
            config.min_angle,
            on_iterate,
        )

    # --------------------------------------------
    # Evaluation pipeline
    # --------------------------------------------

    def evaluate(self, cp: ControlPolygon) -> DomainEvaluation:
        """Assemble, mesh and solve the two states of one control polygon"""
        boundary = assemble_boundary(cp, self.axis, self.n_samples, l_guard=self.params.delta_l)
        mesh = triangulate(boundary, self.mesh_h, self.min_angle)
        return self._solve(cp, boundary, mesh)

    def evaluate_moved(self, cp: ControlPolygon, reference: DomainEvaluation) -> DomainEvaluation:
        """
        Evaluate cp on the mesh of reference moved to the boundary of cp.

        The connectivity is kept, boundary nodes follow their polyline edges
        and interior nodes follow the harmonic extension, so J_eps depends
        continuously on cp.

        Raises:
            MeshQualityError: the moved mesh inverts or leaves the quality
                band set by MOVED_ANGLE_RATIO and MOVED_SIZE_RATIO
        """
        boundary = move_boundary(reference.boundary, cp, l_guard=self.params.delta_l)
        positions = carry_boundary_nodes(reference.mesh, reference.boundary, boundary)
        mesh = move_mesh(reference.mesh, positions, reference.system)
        worst = float(mesh.min_angles.min())
        if worst < MOVED_ANGLE_RATIO * self.min_angle:
            raise MeshQualityError(f"Moved mesh has a {worst:.2f} degree angle")
        largest = float(mesh.circumradii.max())
        if largest > MOVED_SIZE_RATIO * self.mesh_h:
            raise MeshQualityError(f"Moved mesh has circumradius {largest:.3e}")
        return self._solve(cp, boundary, mesh)

    def evaluate_trial(self, cp: ControlPolygon, reference: DomainEvaluation) -> DomainEvaluation:
        """evaluate_moved, with a fresh mesh when the moved one is unusable"""
        try:
            return self.evaluate_moved(cp, reference)
        except MeshQualityError as e:
            logger.debug(f"Remeshing trial polygon: {e}")
            return self.evaluate(cp)

    def _solve(self, cp: ControlPolygon, boundary: MarkedBoundary, mesh: TriangleMesh) -> DomainEvaluation:
        system = P1System(mesh)
        u1 = solve_dirichlet_state(mesh, system)
        u2eps = solve_robin_state(mesh, self.penalty, system)
        grad_u1 = recover_boundary_gradient(mesh, u1, system)
        return DomainEvaluation(
            polygon=cp,
            boundary=boundary,
            mesh=mesh,
            system=system,
            u1=u1,
            u2eps=u2eps,
            j_eps=functional_J_eps(mesh, u1, u2eps),
            neumann_defect=functional_neumann_defect(boundary, grad_u1, self.penalty.neumann_datum),
            dirichlet_defect=functional_dirichlet_defect(boundary, u2eps),
            convexity=check_convexity(boundary),
        )

    def gradient(self, ev: DomainEvaluation) -> GradientEvaluation:
        """Adjoint solves, gradient density and unprojected descent direction"""
        p1 = solve_adjoint_p1(ev.mesh, ev.u1, ev.u2eps, ev.system)
        p2 = solve_adjoint_p2eps(ev.mesh, ev.u1, ev.u2eps, self.penalty, ev.system)
        gradients = FieldGradients.recover(ev.u1, ev.u2eps, p1, p2, ev.system)
        density = gradient_density(ev.boundary.sample, ev.u1, ev.u2eps, p1, p2, self.penalty, gradients)
        direction = descent_direction(density, ev.boundary.sample, ev.polygon, self.axis)
        return GradientEvaluation(p1=p1, p2=p2, gradients=gradients, density=density, direction=direction)

    def unpenalized_misfit(self, ev: DomainEvaluation) -> float:
        """integral (u2 - u1)^2 with the exact mixed state u2"""
        u2 = solve_mixed_state(ev.mesh, self.penalty.neumann_datum, ev.system)
        return functional_misfit(ev.mesh, ev.u1, u2)

    # --------------------------------------------
    # Outer loop
    # --------------------------------------------

    def _record(self, l: int, ev: DomainEvaluation, alpha: float, backtracks: int, displacement: float) -> IterationRecord:
        return IterationRecord(
            iterate=l,
            j_eps=ev.j_eps,
            alpha=alpha,
            backtracks=backtracks,
            max_displacement=displacement,
            kappa_lower=self.axis.center - float(ev.polygon.lower_tip[1]),
            kappa_upper=float(ev.polygon.upper_tip[1]) - self.axis.center,
            convex=ev.convexity.convex,
            neumann_defect=ev.neumann_defect,
            dirichlet_defect=ev.dirichlet_defect,
        )

    def run(self, initial: ControlPolygon) -> OptimizerState:
        """
        Run until the stopping rule, a line search failure or max_iters.

        Final status is one of "converged", "stationary", "line_search_failed"
        or "max_iters"; state.evaluation holds the last accepted domain.

        Raises:
            OptimizationFailedError: the current iterate cannot be evaluated
        """
        try:
            ev = self.evaluate(initial)
        except DomainError as e:
            raise OptimizationFailedError(f"Initial domain is not admissible: {e}", cause=e) from e

        state = OptimizerState(iterate=0, polygon=initial, j_eps=ev.j_eps, eps=self.penalty.eps)
        state.history.append(self._record(0, ev, 0.0, 0, 0.0))
        self.last_evaluation = ev
        logger.info(
            f"🚀 Start: J_eps={ev.j_eps:.6e}, eps={self.penalty.eps}, m={initial.degree}, "
            f"nodes={ev.mesh.n_nodes}"
        )
        self._notify(state, ev)

        for l in range(self.params.max_iters):
            try:
                grad = self.gradient(ev)
            except DomainError as e:
                state.status = "failed"
                raise OptimizationFailedError(f"Gradient failed at iterate {l}: {e}", state=state, cause=e) from e

            if not np.any(grad.direction):
                state.status = "stationary"
                logger.info(f"Iterate {l}: zero descent direction, stopping")
                break

            try:
                result = line_search(
                    ev.polygon,
                    grad.direction,
                    self.params,
                    lambda cp, reference=ev: self.evaluate_trial(cp, reference),
                    ev.j_eps,
                    project=self._project,
                )
            except LineSearchError as e:
                state.status = "line_search_failed"
                logger.warning(f"⚠️ Iterate {l}: {e}")
                break

            displacement = float(np.max(result.candidate.displacement_from(ev.polygon)))
            ev = result.evaluation
            state.iterate = l + 1
            state.polygon = ev.polygon
            state.j_eps = ev.j_eps
            state.alpha = result.alpha
            if state.baseline_displacement is None:
                state.baseline_displacement = displacement
            state.history.append(self._record(l + 1, ev, result.alpha, result.backtracks, displacement))
            self.last_evaluation = ev

            logger.info(
                f"l={l + 1} J_eps={ev.j_eps:.6e} alpha={result.alpha:.3e} a={result.backtracks} "
                f"max|dp|={displacement:.3e}"
            )
            self._notify(state, ev)

            if displacement <= self.params.tau_r * state.baseline_displacement:
                state.status = "converged"
                break
        else:
            state.status = "max_iters"

        logger.info(f"✅ Finished: {state}")
        return state

    def _project(self, cp: ControlPolygon, dp: np.ndarray, alpha: float) -> ControlPolygon:
        return project_update(cp, dp, alpha, self.axis, self.params)

    def _notify(self, state: OptimizerState, ev: DomainEvaluation) -> None:
        if self.on_iterate is not None:
            self.on_iterate(state, ev)

    def run_continuation(self, initial: ControlPolygon, steps: int) -> List[OptimizerState]:
        """
        Run, then halve eps and restart from the final polygon, steps times.
        Returns the state of every stage.
        """
        states = []
        polygon = initial
        penalty = self.penalty
        for stage in range(steps + 1):
            if stage:
                penalty = penalty.with_eps(0.5 * penalty.eps)
                logger.warning(f"Continuation restart {stage}/{steps}: eps={penalty.eps:.4g}")
            stage_optimizer = ShapeOptimizer(
                self.axis,
                penalty,
                self.params,
                self.n_samples,
                self.mesh_h,
                self.min_angle,
                self.on_iterate,
            )
            state = stage_optimizer.run(polygon)
            self.last_evaluation = stage_optimizer.last_evaluation
            states.append(state)
            polygon = state.polygon
            if state.status not in ("converged", "stationary", "max_iters"):
                break
        self.penalty = penalty
        return states


def run_optimization(
    initial: ControlPolygon,
    k_spec: AxisSpec,
    pen: PenaltyParams,
    params: OptimizerParams,
    mesh_h: float = DEFAULT_TARGET_H,
    n_samples: int = 400,
) -> OptimizerState:
    """Functional entry point: build a ShapeOptimizer and run it"""
    return ShapeOptimizer(k_spec, pen, params, n_samples, mesh_h).run(initial)


@dataclass(eq=False)
class SolveOutcome:
    """Result of solve_config: every stage plus the final evaluated domain"""

    stages: List[OptimizerState]
    evaluation: DomainEvaluation
    optimizer: ShapeOptimizer

    @property
    def state(self) -> OptimizerState:
        return self.stages[-1]


def solve_config(
    config: RunConfig,
    continuation: bool = False,
    on_iterate: Optional[Callable[[OptimizerState, DomainEvaluation], None]] = None,
) -> SolveOutcome:
    """Run the optimizer on config.initial_polygon(), with eps continuation if asked"""
    optimizer = ShapeOptimizer.from_config(config, on_iterate=on_iterate)
    initial = config.initial_polygon()
    if continuation:
        stages = optimizer.run_continuation(initial, config.continuation_steps)
    else:
        stages = [optimizer.run(initial)]
    return SolveOutcome(stages=stages, evaluation=optimizer.last_evaluation, optimizer=optimizer)
