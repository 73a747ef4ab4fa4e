"""
Unit tests for the meshing service.

Tests verify:
- Size and angle targets of the refined triangulation
- Boundary node numbering, edge orientation and marker inheritance
- Degenerate input and adjacency integrity errors
- Uniform red refinement
- Carrying boundary nodes to a moved polygon
"""

import numpy as np
import pytest

from app.domain.entities import MarkedBoundary
from app.domain.exceptions import InfeasibleGeometryError, InvalidParameterError, MeshIntegrityError
from app.domain.value_objects import Marker
from app.services.boundary_model import assemble_boundary
from app.services.meshing import (
    adjacent_triangles,
    carry_boundary_nodes,
    polygon_area,
    refine_uniform,
    triangulate,
)
from tests.factories.geometry_factory import make_strip

pytestmark = pytest.mark.unit  # Mark all tests in this module as unit tests


# ============================================
# Triangulation Tests
# ============================================

class TestTriangulate:

    def test_size_and_angle_targets(self, strip_mesh):
        assert np.all(strip_mesh.circumradii <= 0.25 * (1.0 + 1e-9))
        assert np.all(strip_mesh.min_angles >= 20.0 - 1e-6)
        assert np.all(strip_mesh.signed_areas > 0.0)

    def test_covers_the_domain(self, strip_mesh):
        assert float(np.sum(strip_mesh.signed_areas)) == pytest.approx(1.0, abs=1e-12)
        assert float(np.sum(strip_mesh.edge_lengths)) == pytest.approx(4.0, abs=1e-12)

    def test_boundary_vertices_come_first(self):
        strip = make_strip()

        mesh = triangulate(strip, 0.25)

        np.testing.assert_array_equal(mesh.nodes[: strip.n_edges], strip.vertices)

    def test_edges_inherit_markers_and_face_outward(self, strip_mesh):
        k_edges = strip_mesh.edges_with(Marker.K)
        gamma_edges = strip_mesh.edges_with(Marker.GAMMA)

        np.testing.assert_allclose(strip_mesh.edge_midpoints[k_edges, 0], 0.0)
        np.testing.assert_allclose(strip_mesh.edge_normals[k_edges], [[-1.0, 0.0]] * k_edges.size, atol=1e-14)
        np.testing.assert_allclose(strip_mesh.edge_normals[gamma_edges], [[1.0, 0.0]] * gamma_edges.size, atol=1e-14)
        assert np.sum(strip_mesh.edge_lengths[k_edges]) == pytest.approx(1.0)

    def test_edges_ordered_along_the_polyline(self, strip_mesh):
        assert np.all(np.diff(strip_mesh.edge_origin) >= 0)
        # consecutive edges chain head to tail
        np.testing.assert_array_equal(
            strip_mesh.boundary_edges[1:, 0], strip_mesh.boundary_edges[:-1, 1]
        )

    def test_free_boundary_domain(self, polygon, axis):
        b = assemble_boundary(polygon, axis, 60)

        mesh = triangulate(b, 0.05)

        np.testing.assert_array_equal(mesh.nodes[:60], b.sample.x)
        assert float(np.sum(mesh.signed_areas)) == pytest.approx(polygon_area(b), rel=1e-12)
        assert np.all(mesh.circumradii <= 0.05 * (1.0 + 1e-9))

    @pytest.mark.parametrize("target_h", [0.0, -0.1])
    def test_rejects_non_positive_size(self, target_h):
        with pytest.raises(InvalidParameterError, match="target_h"):
            triangulate(make_strip(), target_h)

    def test_degenerate_polygon(self):
        sliver = MarkedBoundary(
            vertices=np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1e-12]]),
            markers=np.full(3, int(Marker.GAMMA)),
        )

        with pytest.raises(InfeasibleGeometryError, match="degenerate"):
            triangulate(sliver, 0.1)


# ============================================
# Adjacency Tests
# ============================================

class TestAdjacentTriangles:

    def test_owner_of_each_edge(self):
        triangles = np.array([[0, 1, 2], [0, 2, 3]])
        edges = np.array([[0, 1], [2, 3], [3, 0]])

        owner = adjacent_triangles(triangles, edges, 4)

        np.testing.assert_array_equal(owner, [0, 1, 1])

    def test_orphan_edge(self):
        with pytest.raises(MeshIntegrityError) as exc_info:
            adjacent_triangles(np.array([[0, 1, 2]]), np.array([[0, 3]]), 4)

        assert exc_info.value.edge == (0, 3)
        assert exc_info.value.count == 0

    def test_interior_edge_is_shared(self):
        triangles = np.array([[0, 1, 2], [0, 2, 3]])

        with pytest.raises(MeshIntegrityError, match="2 adjacent"):
            adjacent_triangles(triangles, np.array([[2, 0]]), 4)


# ============================================
# Refinement Tests
# ============================================

class TestRefineUniform:

    def test_red_refinement(self, strip_mesh):
        # Act
        fine = refine_uniform(strip_mesh)

        # Assert
        assert fine.n_triangles == 4 * strip_mesh.n_triangles
        assert fine.boundary_edges.shape[0] == 2 * strip_mesh.boundary_edges.shape[0]
        assert fine.target_h == pytest.approx(0.125)
        np.testing.assert_array_equal(fine.nodes[: strip_mesh.n_nodes], strip_mesh.nodes)
        assert float(np.sum(fine.signed_areas)) == pytest.approx(1.0, abs=1e-12)
        assert np.all(fine.signed_areas > 0.0)

    def test_boundary_markers_survive(self, strip_mesh):
        fine = refine_uniform(strip_mesh)

        for marker in Marker:
            coarse_len = np.sum(strip_mesh.edge_lengths[strip_mesh.edges_with(marker)])
            fine_len = np.sum(fine.edge_lengths[fine.edges_with(marker)])
            assert fine_len == pytest.approx(coarse_len)
        np.testing.assert_allclose(fine.edge_normals[fine.edges_with(Marker.K)][:, 0], -1.0)


# ============================================
# Carried Boundary Nodes
# ============================================

class TestCarryBoundaryNodes:

    def test_same_boundary_keeps_the_nodes(self, strip_mesh):
        strip = make_strip()

        positions = carry_boundary_nodes(strip_mesh, strip, strip)

        np.testing.assert_allclose(positions, strip_mesh.nodes, atol=1e-15)

    def test_inserted_nodes_keep_their_fraction(self, strip_mesh):
        """Stretching the strip vertically maps every boundary node by the same stretch"""
        positions = carry_boundary_nodes(strip_mesh, make_strip(0.5), make_strip(0.6))

        nodes = strip_mesh.boundary_nodes
        assert nodes.size > 4
        np.testing.assert_allclose(positions[nodes], strip_mesh.nodes[nodes] * [1.0, 1.2], atol=1e-12)
        interior = np.setdiff1d(np.arange(strip_mesh.n_nodes), nodes)
        np.testing.assert_array_equal(positions[interior], strip_mesh.nodes[interior])

    def test_vertex_counts_must_match(self, strip_mesh):
        triangle_boundary = MarkedBoundary(
            vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
            markers=np.full(3, int(Marker.GAMMA)),
        )

        with pytest.raises(InvalidParameterError, match="boundary vertices"):
            carry_boundary_nodes(strip_mesh, make_strip(), triangle_boundary)
