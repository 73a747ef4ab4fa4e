"""
Unit tests for the run artifact writers.

Tests verify:
- CSV cell formatting (fixed float format, integers, booleans, text)
- Column layout of the iteration, boundary, control point and field tables
- The plain text mesh format
- SVG drawings with one path per marker class
"""

import csv
import json
import xml.etree.ElementTree as ET

import pytest

from app.application.reports import FailureRecord
from app.domain.entities import IterationRecord
from app.domain.value_objects import Marker
from app.infrastructure.exporters import (
    ITERATION_COLUMNS,
    _runs,
    boundary_svg,
    write_boundary,
    write_control_points,
    write_csv,
    write_field,
    write_iterations,
    write_json,
    write_mesh,
    write_svg,
)
from tests.factories.geometry_factory import make_field, make_polygon, make_square, make_strip

pytestmark = pytest.mark.unit  # Mark all tests in this module as unit tests

SVG_NS = "{http://www.w3.org/2000/svg}"


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


# ============================================
# CSV Tests
# ============================================

class TestCsv:

    def test_cell_formatting(self, tmp_path):
        path = write_csv(tmp_path / "nested" / "t.csv", ("a", "b", "c"), [(1.5, 3, True), (0.0, 0, False)])

        assert path.read_text(encoding="utf-8") == (
            "a,b,c\n"
            "1.500000000000e+00,3,1\n"
            "0.000000000000e+00,0,0\n"
        )

    def test_text_cells_pass_through(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ("marker", "status", "x"), [("Gamma", "converged", 0.5), ("L", "max_iters", 1)])

        assert _read_rows(path)[1:] == [
            ["Gamma", "converged", "5.000000000000e-01"],
            ["L", "max_iters", "1"],
        ]

    def test_iterations(self, tmp_path):
        record = IterationRecord(
            iterate=2,
            j_eps=1e-3,
            alpha=0.625,
            backtracks=4,
            max_displacement=1e-2,
            kappa_lower=0.2,
            kappa_upper=0.3,
            convex=True,
            neumann_defect=0.5,
            dirichlet_defect=0.25,
        )

        rows = _read_rows(write_iterations(tmp_path / "iterations.csv", [record]))

        assert tuple(rows[0]) == ITERATION_COLUMNS
        row = dict(zip(rows[0], rows[1]))
        assert row["iterate"] == "2"
        assert row["backtracks"] == "4"
        assert row["convex"] == "1"
        assert float(row["kappa_extent"]) == pytest.approx(0.25)

    def test_boundary_labels(self, tmp_path):
        rows = _read_rows(write_boundary(tmp_path / "boundary.csv", make_strip()))

        assert rows[0] == ["x1", "x2", "marker"]
        assert [r[2] for r in rows[1:]] == ["L", "Gamma", "L", "K"]
        assert float(rows[2][0]) == 1.0

    def test_control_points(self, tmp_path):
        cp = make_polygon(m=6)

        rows = _read_rows(write_control_points(tmp_path / "cp.csv", cp))

        assert rows[0] == ["k", "x1", "x2"]
        assert [r[0] for r in rows[1:]] == [str(k) for k in range(7)]
        assert float(rows[1][2]) == pytest.approx(cp.lower_tip[1], abs=1e-12)

    def test_field(self, tmp_path, strip_mesh):
        u = make_field(strip_mesh, lambda x: x[:, 0] + x[:, 1])

        rows = _read_rows(write_field(tmp_path / "u.csv", u))

        assert rows[0] == ["node", "x1", "x2", "value"]
        assert len(rows) == strip_mesh.n_nodes + 1
        node, x1, x2, value = rows[5]
        assert float(value) == pytest.approx(float(x1) + float(x2), abs=1e-11)


# ============================================
# Mesh and JSON Tests
# ============================================

class TestMeshAndJson:

    def test_mesh_text(self, tmp_path, strip_mesh):
        path = write_mesh(tmp_path / "mesh.txt", strip_mesh)

        lines = path.read_text(encoding="utf-8").splitlines()
        n, t, e = strip_mesh.n_nodes, strip_mesh.n_triangles, strip_mesh.boundary_edges.shape[0]
        assert lines[0] == f"nodes {n} triangles {t} edges {e}"
        assert len(lines) == 1 + n + t + e
        assert lines[-1].split()[2] in {str(int(m)) for m in Marker}

    def test_json(self, tmp_path):
        record = FailureRecord(command="solve", error_type="LineSearchError", message="no step", iterate=3)

        data = json.loads(write_json(tmp_path / "failure.json", record).read_text(encoding="utf-8"))

        assert data["command"] == "solve"
        assert data["iterate"] == 3


# ============================================
# SVG Tests
# ============================================

class TestSvg:

    def test_runs_of_the_strip(self):
        strip = make_strip()

        l_runs = _runs(strip, Marker.L)

        assert len(l_runs) == 2
        assert [run.shape for run in l_runs] == [(2, 2), (2, 2)]
        assert _runs(strip, Marker.K)[0].tolist() == [[0.0, 0.5], [0.0, -0.5]]

    def test_single_marker_closes_the_loop(self):
        runs = _runs(make_square(), Marker.GAMMA)

        assert len(runs) == 1
        assert runs[0].shape == (5, 2)
        assert _runs(make_square(), Marker.K) == []

    def test_document(self, tmp_path):
        path = write_svg(tmp_path / "boundary.svg", make_strip(), title="iterate 0")

        root = ET.fromstring(path.read_text(encoding="utf-8"))

        ids = [p.get("id") for p in root.iter(f"{SVG_NS}path")]
        assert ids == ["domain", "K", "L", "Gamma"]
        assert root.find(f"{SVG_NS}title").text == "iterate 0"

    def test_deterministic(self):
        assert boundary_svg(make_strip()) == boundary_svg(make_strip())
