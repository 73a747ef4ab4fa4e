"""
Report models written by the CLI as JSON.

Plain pydantic models so every report serializes with model_dump_json().
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


# ============================================
# Solve
# ============================================

class SolveSummary(BaseModel):
    """Outcome of one solve run"""
    version: str
    status: str = Field(..., description="converged, stationary, max_iters or line_search_failed")
    iterations: int = Field(..., ge=0)
    j_eps_initial: float
    j_eps_final: float
    misfit_initial: float = Field(..., description="Unpenalized functional with the mixed state u2")
    misfit_final: float
    kappa_final: float = Field(..., description="Half tip-to-tip extent of the final boundary")
    convex_final: bool
    eps: float
    stages: int = 1


# ============================================
# Verification
# ============================================

class SuiteResult(BaseModel):
    """One verification suite with its measured value and threshold"""
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


class VerificationReport(BaseModel):
    suites: List[SuiteResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    @property
    def failures(self) -> List[SuiteResult]:
        return [s for s in self.suites if not s.passed]


class GradientCheckRow(BaseModel):
    direction: int
    center: float = Field(..., description="Bump center in the curve parameter")
    width: float = Field(..., description="Bump half-width in the curve parameter")
    analytic: float
    finite_difference: float
    relative_error: float


class GradientCheckReport(BaseModel):
    t: float
    mesh_h: float
    tolerance: float
    rows: List[GradientCheckRow] = Field(default_factory=list)

    @property
    def worst_error(self) -> float:
        return max((r.relative_error for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst_error <= self.tolerance


# ============================================
# Studies
# ============================================

class StudyRecord(BaseModel):
    """Observables of one study point (one a or one eps)"""
    study: str
    parameter: float
    status: str = ""
    observables: Dict[str, float] = Field(default_factory=dict)
    profile_grid: List[float] = Field(default_factory=list, description="Declared ordinate grid")
    profile: List[float] = Field(default_factory=list, description="Gamma abscissa on the grid")
    histories: Dict[str, List[float]] = Field(default_factory=dict)


class StudyAssertion(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class StudyReport(BaseModel):
    study: str
    records: List[StudyRecord] = Field(default_factory=list)
    assertions: List[StudyAssertion] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)


# ============================================
# Failures
# ============================================

class FailureRecord(BaseModel):
    """Machine-readable record of a failed command"""
    command: str
    error_type: str
    message: str
    line: Optional[int] = None
    key: Optional[str] = None
    iterate: Optional[int] = None
    status: Optional[str] = None
    snapshot: Optional[str] = Field(None, description="Path of the last accepted control points")
    failures: List[str] = Field(default_factory=list)
