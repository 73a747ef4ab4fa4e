"""
Unit tests for the domain value objects.

Tests verify:
- Marker labels
- AxisSpec end points and validation
- PenaltyParams support radius and eps replacement
- OptimizerParams ranges and the backtracking step

These tests are fast and have no external dependencies.
"""

import pytest

from app.domain.exceptions import InvalidParameterError
from app.domain.value_objects import AxisSpec, Marker, OptimizerParams, PenaltyParams

pytestmark = pytest.mark.unit  # Mark all tests in this module as unit tests


# ============================================
# Marker Tests
# ============================================

class TestMarker:

    def test_labels(self):
        assert [m.label for m in Marker] == ["K", "L", "Gamma"]

    def test_values_are_stable_integers(self):
        """Markers are written to mesh files as integers"""
        assert (int(Marker.K), int(Marker.L), int(Marker.GAMMA)) == (1, 2, 3)


# ============================================
# AxisSpec Tests
# ============================================

class TestAxisSpec:

    def test_end_points(self):
        k = AxisSpec(center=0.5, half_length=0.129)

        assert k.lower == pytest.approx(0.371)
        assert k.upper == pytest.approx(0.629)

    @pytest.mark.parametrize("half_length", [0.0, -0.1])
    def test_rejects_non_positive_half_length(self, half_length):
        with pytest.raises(InvalidParameterError, match="half_length"):
            AxisSpec(center=0.5, half_length=half_length)

    def test_invalid_parameter_is_a_value_error(self):
        with pytest.raises(ValueError):
            AxisSpec(center=0.5, half_length=0.0)


# ============================================
# PenaltyParams Tests
# ============================================

class TestPenaltyParams:

    def test_beta_is_eps_to_the_q(self):
        assert PenaltyParams(eps=0.1, q=4.0).beta == pytest.approx(1e-4)

    def test_with_eps_keeps_q_and_datum(self):
        # Arrange
        p = PenaltyParams(eps=0.1, q=3.0, neumann_datum=2.0)

        # Act
        halved = p.with_eps(0.05)

        # Assert
        assert halved.eps == 0.05
        assert halved.q == 3.0
        assert halved.neumann_datum == 2.0
        assert p.eps == 0.1

    @pytest.mark.parametrize(
        "kwargs, field",
        [
            (dict(eps=0.0, q=4.0), "eps"),
            (dict(eps=0.1, q=-1.0), "q"),
            (dict(eps=0.1, q=4.0, neumann_datum=0.0), "neumann_datum"),
        ],
    )
    def test_rejects_out_of_range(self, kwargs, field):
        with pytest.raises(InvalidParameterError, match=field):
            PenaltyParams(**kwargs)


# ============================================
# OptimizerParams Tests
# ============================================

class TestOptimizerParams:

    def test_defaults_are_the_published_values(self):
        params = OptimizerParams()

        assert params.mu == 10.0
        assert params.eta == 0.5
        assert params.tau_r == 5e-4

    def test_step_sequence(self):
        params = OptimizerParams(mu=10.0, eta=0.5)

        assert [params.step(a) for a in range(4)] == [10.0, 5.0, 2.5, 1.25]

    @pytest.mark.parametrize(
        "kwargs, field",
        [
            (dict(mu=0.0), "mu"),
            (dict(eta=1.0), "eta"),
            (dict(eta=0.0), "eta"),
            (dict(lam=-1.0), "lam"),
            (dict(tau_r=0.0), "tau_r"),
            (dict(max_iters=0), "max_iters"),
            (dict(max_backtracks=-1), "max_backtracks"),
            (dict(delta_l=0.0), "delta_l"),
        ],
    )
    def test_rejects_out_of_range(self, kwargs, field):
        with pytest.raises(InvalidParameterError, match=field):
            OptimizerParams(**kwargs)
