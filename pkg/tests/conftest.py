"""
Shared pytest fixtures for the free boundary solver tests.

This module provides:
- Parameter objects of the published setup
- Coarse control polygons and configs
- Small meshes (strip, square) and a coarse evaluated domain

Usage:
    Fixtures are automatically discovered by pytest.
    Builders for one-off objects live in tests/factories/geometry_factory.py.
"""

import pytest

from app.application.shape_optimizer import ShapeOptimizer
from app.config import RunConfig
from app.domain.value_objects import AxisSpec, OptimizerParams, PenaltyParams
from app.services.meshing import triangulate
from tests.factories.geometry_factory import make_config, make_polygon, make_square, make_strip_mesh


# ============================================
# Parameter Fixtures
# ============================================

@pytest.fixture
def axis() -> AxisSpec:
    """K of the published setup: half-length 0.129 around 0.5"""
    return AxisSpec(center=0.5, half_length=0.129)


@pytest.fixture
def penalty() -> PenaltyParams:
    return PenaltyParams(eps=0.1, q=4.0)


@pytest.fixture
def optimizer_params() -> OptimizerParams:
    return OptimizerParams(mu=10.0, eta=0.5, lam=1000.0)


@pytest.fixture
def published_config() -> RunConfig:
    """Default RunConfig (published configuration)"""
    return RunConfig(output_dir="runs/test", seed=0)


@pytest.fixture
def coarse_config() -> RunConfig:
    return make_config()


# ============================================
# Geometry Fixtures
# ============================================

@pytest.fixture
def polygon():
    """Coarse half-circle control polygon (m=12)"""
    return make_polygon()


@pytest.fixture
def strip_mesh():
    """Strip (0,1) x (-0.5,0.5) meshed at h=0.25"""
    return make_strip_mesh(0.25)


@pytest.fixture
def square_mesh():
    return triangulate(make_square(), 0.25)


# ============================================
# Evaluated Domain Fixtures
# ============================================

@pytest.fixture(scope="module")
def coarse_evaluation():
    """
    Initial domain of the coarse config, meshed and solved.

    Module scoped: building it meshes the domain and runs two solves.
    """
    config = make_config()
    optimizer = ShapeOptimizer.from_config(config)
    return optimizer, optimizer.evaluate(config.initial_polygon())
