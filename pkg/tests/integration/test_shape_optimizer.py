"""
Integration tests for the shape optimizer outer loop.

Tests verify:
- Evaluation of the initial domain (markers, convexity, positive J_eps)
- J_eps decreases along accepted iterates and the status is reported
- Tips stay outside K and iterates are handed to on_iterate
- eps continuation and the functional entry points
- A non-admissible start raises OptimizationFailedError
- Moved-mesh trials: J_eps continuous in the step, finite differences
  along the full and the tip-only direction are negative
- The published run converges to the reported L extent, symmetric (slow)
"""

from dataclasses import replace
from unittest.mock import MagicMock

import numpy as np
import pytest

from app.application.shape_optimizer import ShapeOptimizer, run_optimization, solve_config
from app.application.studies import (
    APEX_ANGLE_TOLERANCE,
    SYMMETRY_TOLERANCE,
    apex_normal_angle,
    reflection_mismatch,
)
from app.config import RunConfig
from app.domain.entities import ControlPolygon
from app.domain.exceptions import MeshQualityError, OptimizationFailedError
from app.domain.value_objects import Marker
from tests.factories.geometry_factory import PUBLISHED_AXIS, make_config, make_polygon

pytestmark = pytest.mark.integration

FINISHED = {"converged", "stationary", "line_search_failed", "max_iters"}


# ============================================
# Fixtures
# ============================================

@pytest.fixture(scope="module")
def short_run():
    """Three iterations of the coarse config, with every notified iterate"""
    config = make_config(max_iters=3)
    seen = []
    optimizer = ShapeOptimizer.from_config(config, on_iterate=lambda state, ev: seen.append((state.iterate, ev.j_eps)))
    state = optimizer.run(config.initial_polygon())
    return optimizer, state, seen


# ============================================
# Evaluation Tests
# ============================================

class TestEvaluate:

    def test_initial_domain(self, coarse_evaluation):
        optimizer, ev = coarse_evaluation

        assert ev.j_eps > 0.0
        assert np.isfinite(ev.j_eps)
        assert ev.convexity.convex
        assert ev.neumann_defect > 0.0
        assert set(np.unique(ev.mesh.edge_markers)) == {int(Marker.K), int(Marker.L), int(Marker.GAMMA)}
        assert ev.mesh.n_nodes > len(ev.boundary.sample)

    def test_gradient_shapes(self, coarse_evaluation):
        optimizer, ev = coarse_evaluation

        grad = optimizer.gradient(ev)

        assert grad.direction.shape == ev.polygon.points.shape
        assert grad.predicted_decrease < 0.0

    def test_unpenalized_misfit_is_finite(self, coarse_evaluation):
        optimizer, ev = coarse_evaluation

        misfit = optimizer.unpenalized_misfit(ev)

        assert np.isfinite(misfit)
        assert misfit > 0.0


# ============================================
# Outer Loop Tests
# ============================================

class TestRun:

    def test_status(self, short_run):
        _, state, _ = short_run

        assert state.status in FINISHED
        assert state.history[0].iterate == 0
        assert state.history[0].alpha == 0.0

    def test_j_eps_decreases(self, short_run):
        _, state, _ = short_run

        j = np.array(state.j_history)

        assert len(j) >= 2
        assert np.all(np.diff(j) < 0.0)
        assert state.j_eps == j[-1]

    def test_tips_stay_outside_k(self, short_run):
        optimizer, state, _ = short_run
        axis = optimizer.axis

        assert state.polygon.lower_tip[1] <= axis.lower - optimizer.params.delta_l + 1e-12
        assert state.polygon.upper_tip[1] >= axis.upper + optimizer.params.delta_l - 1e-12
        np.testing.assert_allclose(state.polygon.lower_tip[0], 0.0, atol=1e-14)
        np.testing.assert_allclose(state.polygon.upper_tip[0], 0.0, atol=1e-14)

    def test_every_iterate_is_notified(self, short_run):
        optimizer, state, seen = short_run

        assert [l for l, _ in seen] == [r.iterate for r in state.history]
        assert [j for _, j in seen] == state.j_history
        assert optimizer.last_evaluation.j_eps == state.j_eps

    def test_baseline_displacement(self, short_run):
        _, state, _ = short_run

        assert state.baseline_displacement == pytest.approx(state.history[1].max_displacement)

    def test_non_admissible_start(self, coarse_config):
        optimizer = ShapeOptimizer.from_config(coarse_config)

        with pytest.raises(OptimizationFailedError, match="Initial domain is not admissible"):
            optimizer.run(make_polygon(kappa2=0.1))

    def test_failed_first_line_search(self, coarse_config):
        """A tiny lam makes the sufficient decrease test unreachable"""
        config = coarse_config.with_changes(lam=1e-12, max_backtracks=0)
        on_iterate = MagicMock()

        state = ShapeOptimizer.from_config(config, on_iterate=on_iterate).run(config.initial_polygon())

        assert state.status == "line_search_failed"
        assert state.iterate == 0
        assert len(state.history) == 1
        on_iterate.assert_called_once()


# ============================================
# Continuation and Entry Points
# ============================================

class TestEntryPoints:

    def test_run_optimization(self, penalty, optimizer_params):
        params = replace(optimizer_params, max_iters=1)

        state = run_optimization(make_polygon(), PUBLISHED_AXIS, penalty, params, mesh_h=0.05, n_samples=120)

        assert state.status in FINISHED
        assert state.eps == penalty.eps
        assert len(state.history) in (1, 2)

    def test_continuation_halves_eps(self):
        config = make_config(max_iters=1, continuation_steps=1)

        outcome = solve_config(config, continuation=True)

        assert [s.eps for s in outcome.stages] == [0.1, 0.05]
        assert outcome.optimizer.penalty.eps == 0.05
        assert outcome.state is outcome.stages[-1]
        assert outcome.evaluation.j_eps == outcome.state.j_eps

    def test_solve_config_single_stage(self):
        outcome = solve_config(make_config(max_iters=1))

        assert len(outcome.stages) == 1
        assert outcome.evaluation.polygon is outcome.state.polygon


# ============================================
# Moved Mesh Evaluation
# ============================================

def _shifted(polygon: ControlPolygon, direction: np.ndarray, step: float) -> ControlPolygon:
    """polygon moved by step along direction scaled to unit max norm"""
    return ControlPolygon(polygon.points + step * direction / np.max(np.abs(direction)))


def _slope(optimizer, ev, direction: np.ndarray, step: float) -> float:
    """Central difference of J_eps on the moved mesh, per unit of step along direction"""
    scale = np.max(np.abs(direction))
    j_plus = optimizer.evaluate_moved(_shifted(ev.polygon, direction, step), ev).j_eps
    j_minus = optimizer.evaluate_moved(_shifted(ev.polygon, direction, -step), ev).j_eps
    return (j_plus - j_minus) / (2.0 * step / scale)


class TestMovedEvaluation:

    def test_same_polygon_gives_same_j(self, coarse_evaluation):
        optimizer, ev = coarse_evaluation

        moved = optimizer.evaluate_moved(ev.polygon, ev)

        assert moved.mesh.n_nodes == ev.mesh.n_nodes
        np.testing.assert_array_equal(moved.mesh.triangles, ev.mesh.triangles)
        assert moved.j_eps == pytest.approx(ev.j_eps, rel=1e-10)

    def test_j_is_continuous_in_the_step(self, coarse_evaluation):
        optimizer, ev = coarse_evaluation
        direction = optimizer.gradient(ev).direction

        gaps = [
            abs(optimizer.evaluate_moved(_shifted(ev.polygon, direction, step), ev).j_eps - ev.j_eps)
            for step in (1e-6, 1e-9, 1e-12)
        ]

        assert gaps[2] <= 1e-8 * ev.j_eps
        assert gaps[1] <= 1e-5 * ev.j_eps
        assert gaps[2] <= gaps[0]

    def test_direction_decreases_j(self, coarse_evaluation):
        optimizer, ev = coarse_evaluation
        direction = optimizer.gradient(ev).direction

        slope = _slope(optimizer, ev, direction, 1e-5)

        assert slope < 0.0
        assert slope == pytest.approx(-np.sum(direction ** 2), rel=0.5)

    def test_tip_move_decreases_j(self, coarse_evaluation):
        """Moving only the two tip ordinates along the direction lowers J_eps"""
        optimizer, ev = coarse_evaluation
        direction = optimizer.gradient(ev).direction
        tips = np.zeros_like(direction)
        tips[[0, -1], 1] = direction[[0, -1], 1]
        assert np.any(tips)

        slope = _slope(optimizer, ev, tips, 1e-5)

        assert slope < 0.0
        assert slope == pytest.approx(-np.sum(tips ** 2), rel=0.5)

    def test_degraded_trial_is_remeshed(self, coarse_evaluation, monkeypatch):
        optimizer, ev = coarse_evaluation
        monkeypatch.setattr("app.application.shape_optimizer.MOVED_SIZE_RATIO", 0.0)
        fresh = MagicMock(wraps=optimizer.evaluate)
        monkeypatch.setattr(optimizer, "evaluate", fresh)

        with pytest.raises(MeshQualityError, match="circumradius"):
            optimizer.evaluate_moved(ev.polygon, ev)
        trial = optimizer.evaluate_trial(ev.polygon, ev)

        fresh.assert_called_once_with(ev.polygon)
        assert trial.j_eps == pytest.approx(ev.j_eps, rel=1e-10)


# ============================================
# Published Run
# ============================================

@pytest.fixture(scope="module")
def published_outcome():
    return solve_config(RunConfig(output_dir="runs/test", seed=0))


@pytest.mark.slow
class TestPublishedRun:

    def test_initial_j_eps(self, published_config):
        optimizer = ShapeOptimizer.from_config(published_config)

        ev = optimizer.evaluate(published_config.initial_polygon())

        assert 1.3e-3 <= ev.j_eps <= 5.2e-3

    def test_converges(self, published_outcome):
        state = published_outcome.state

        assert state.status == "converged"
        assert state.iterate <= 500
        assert np.all(np.diff(state.j_history) < 0.0)

    def test_reaches_small_j_eps(self, published_outcome):
        assert published_outcome.state.j_eps <= 1e-6
        assert published_outcome.evaluation.convexity.convex

    def test_final_l_extent(self, published_outcome):
        kappa = published_outcome.state.history[-1].kappa_extent

        assert 0.224 <= kappa <= 0.244

    def test_final_boundary_is_symmetric(self, published_outcome):
        center = published_outcome.optimizer.axis.center
        gamma = published_outcome.evaluation.boundary.sample.x

        assert reflection_mismatch(gamma, center) <= SYMMETRY_TOLERANCE

    def test_apex_normal_points_along_the_bisector(self, published_outcome):
        center = published_outcome.optimizer.axis.center

        apex_x1, angle = apex_normal_angle(published_outcome.state.polygon, center)

        assert apex_x1 > 0.0
        assert angle <= APEX_ANGLE_TOLERANCE
