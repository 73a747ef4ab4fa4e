"""
Application layer - Use cases and workflow orchestration.

This layer contains:
- The shape optimizer (evaluation pipeline, line search, outer loop)
- Verification suites and the shape-gradient check
- Property studies
- Report models

No direct dependencies on the CLI.
"""
