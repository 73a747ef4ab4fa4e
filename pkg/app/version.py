"""
Application version information.

Version format: MAJOR.MINOR
- MAJOR: Breaking changes (0 while the solver interface settles)
- MINOR: Incremented with each merged PR (0.1 → 0.2 → 0.3...)

Version is printed in the CLI start banner and written to summary.json.
"""

__version__ = "0.1"
