"""
Infrastructure layer - External concerns and cross-cutting functionality.

This layer contains:
- Run artifact writers (CSV, SVG, mesh text, JSON reports)
"""
