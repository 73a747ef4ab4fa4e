"""
Unit tests for the report models.

Tests verify:
- Pass/fail aggregation of verification, gradient check and study reports
- Field validation of the solve summary
- JSON serialization of failure records
"""

import json

import pytest
from pydantic import ValidationError

from app.application.reports import (
    FailureRecord,
    GradientCheckReport,
    GradientCheckRow,
    SolveSummary,
    StudyAssertion,
    StudyReport,
    SuiteResult,
    VerificationReport,
)

pytestmark = pytest.mark.unit  # Mark all tests in this module as unit tests


def _row(direction: int, error: float) -> GradientCheckRow:
    return GradientCheckRow(
        direction=direction,
        center=0.5,
        width=0.1,
        analytic=1.0,
        finite_difference=1.0 + error,
        relative_error=error,
    )


class TestVerificationReport:

    def test_failures(self):
        report = VerificationReport(suites=[
            SuiteResult(name="strip", passed=True, value=1e-14, threshold=1e-12),
            SuiteResult(name="order", passed=False, value=1.2, threshold=1.8),
        ])

        assert not report.passed
        assert [s.name for s in report.failures] == ["order"]

    def test_empty_report_passes(self):
        assert VerificationReport().passed


class TestGradientCheckReport:

    def test_worst_error(self):
        report = GradientCheckReport(t=1e-3, mesh_h=0.02, tolerance=0.05, rows=[_row(0, 0.01), _row(1, 0.04)])

        assert report.worst_error == 0.04
        assert report.passed

    def test_fails_above_tolerance(self):
        report = GradientCheckReport(t=1e-3, mesh_h=0.02, tolerance=0.05, rows=[_row(0, 0.2)])

        assert not report.passed


class TestStudyReport:

    def test_passed_needs_every_assertion(self):
        report = StudyReport(study="symmetry", assertions=[
            StudyAssertion(name="reflection", passed=True),
            StudyAssertion(name="apex_normal", passed=False, detail="angle=0.3 rad"),
        ])

        assert not report.passed


class TestSolveSummary:

    def test_rejects_negative_iterations(self):
        with pytest.raises(ValidationError):
            SolveSummary(
                version="0.1",
                status="converged",
                iterations=-1,
                j_eps_initial=1.0,
                j_eps_final=0.5,
                misfit_initial=1.0,
                misfit_final=0.5,
                kappa_final=0.3,
                convex_final=True,
                eps=0.1,
            )


class TestFailureRecord:

    def test_json_fields(self):
        record = FailureRecord(command="solve", error_type="ConfigError", message="line 3: unknown key", line=3)

        data = json.loads(record.model_dump_json())

        assert data["line"] == 3
        assert data["snapshot"] is None
        assert data["failures"] == []
