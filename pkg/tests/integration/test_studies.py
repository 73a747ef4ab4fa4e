"""
Integration tests for the qualitative studies.

Tests verify:
- u2eps approaches u2 in H1 as eps decreases on a fixed domain
- A symmetric start stays symmetric (slow)
- Domains grow with the K half-length (slow)
- Asymptotics records carry profiles and observables (slow)

The slow studies run several short optimizations on coarse meshes.
"""

import numpy as np
import pytest

from app.application.studies import (
    require_passed,
    study_asymptotics,
    study_monotonicity,
    study_penalization,
    study_symmetry,
)
from tests.factories.geometry_factory import make_config

pytestmark = pytest.mark.integration


class TestPenalization:

    def test_distances_shrink(self, coarse_config):
        report = study_penalization(coarse_config, [0.1, 0.05, 0.01])

        assert [r.parameter for r in report.records] == [0.1, 0.05, 0.01]
        assert [a.name for a in report.assertions] == ["finite_positive", "nonincreasing"]
        assert report.passed, [a.detail for a in report.assertions]
        assert require_passed(report) is report


@pytest.mark.slow
class TestSolveStudies:

    def test_symmetry(self):
        report = study_symmetry(make_config(max_iters=20))

        record = report.records[0]
        assert record.observables["initial_mismatch"] == pytest.approx(0.0, abs=1e-10)
        assert report.passed, [a.detail for a in report.assertions]

    def test_monotonicity(self):
        report = study_monotonicity(make_config(max_iters=20), [0.129, 0.2])

        apex = [r.observables["m_a"] for r in report.records]
        assert apex[0] < apex[1]
        assert report.passed, [a.detail for a in report.assertions]

    def test_asymptotics_records(self):
        report = study_asymptotics(make_config(max_iters=5), [0.5, 1.0], b_window=0.25)

        assert [r.parameter for r in report.records] == [0.5, 1.0]
        assert {a.name for a in report.assertions} == {"apex_nondecreasing", "apex_bounded", "flattening"}
        for record in report.records:
            assert np.isfinite(record.observables["m_a"])
            assert record.observables["flatness"] >= 0.0
            assert len(record.profile) == len(record.profile_grid)
