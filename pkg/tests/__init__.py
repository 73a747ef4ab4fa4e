"""
Tests for the free boundary solver

Tests are organized by layer:
- unit/domain: value objects and entities
- unit/services: geometry, meshing, finite elements and shape calculus
- unit/application: configuration, line search, reports and study observables
- unit/infrastructure: CSV/JSON/SVG exporters
- integration: verification suites, optimizer runs, studies and the CLI
"""

__version__ = "0.1.0"
