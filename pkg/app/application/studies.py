"""
Property studies of the free boundary.

- symmetry: the optimal boundary is symmetric about the perpendicular
  bisector of K and its normal at the apex is horizontal
- monotonicity: a < b implies Omega_a inside Omega_b
- asymptotics: as a grows the boundary flattens toward the strip x1 < 1,
  with apex abscissa m_a nondecreasing and bounded by 1
- penalization: u2eps approaches the mixed state u2 as eps decreases

Every study returns a StudyReport; require_passed turns a failed report into
a StudyAssertionError.
"""

import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from app.application.reports import StudyAssertion, StudyRecord, StudyReport
from app.application.shape_optimizer import ShapeOptimizer, SolveOutcome, solve_config
from app.config import RunConfig
from app.domain.entities import ControlPolygon
from app.domain.exceptions import InvalidParameterError, StudyAssertionError
from app.services.bezier_geometry import curve_points, eval_jet, sample_curve
from app.services.boundary_model import reflect_across
from app.services.fem_core import h1_distance, solve_mixed_state, solve_robin_state

logger = logging.getLogger(__name__)

INCLUSION_TOLERANCE = 5e-3
TREND_TOLERANCE = 1e-2
SYMMETRY_TOLERANCE = 1e-2
APEX_ANGLE_TOLERANCE = 1e-2
HOMOTHETY_TOLERANCE = 5e-3
PENALIZATION_SLACK = 0.05
PROFILE_POINTS = 101
# horizontal radius of the asymptotics start shapes
ASYMPTOTICS_RADIUS = 1.0


# ============================================
# Boundary observables
# ============================================

def gamma_profile(points: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """
    psi(x2): abscissa of the polyline through points on each horizontal line
    of grid, linear between adjacent points. Where a line crosses more than
    once the outermost crossing is taken; NaN where it does not cross.
    """
    y0 = points[:-1, 1][:, None]
    y1 = points[1:, 1][:, None]
    x0 = points[:-1, 0][:, None]
    x1 = points[1:, 0][:, None]
    g = np.asarray(grid, dtype=float)[None, :]

    span = y1 - y0
    crossing = ((y0 - g) * (y1 - g) <= 0.0) & (span != 0.0)
    t = np.divide(g - y0, span, out=np.zeros(crossing.shape), where=span != 0.0)
    x = np.where(crossing, x0 + t * (x1 - x0), -np.inf)
    profile = x.max(axis=0)
    profile[np.isneginf(profile)] = np.nan
    return profile


def shared_grid(boundaries: Iterable[np.ndarray], n: int = PROFILE_POINTS) -> np.ndarray:
    """Ordinates strictly inside the x2-range common to every boundary"""
    boundaries = list(boundaries)
    lo = max(float(np.min(b[:, 1])) for b in boundaries)
    hi = min(float(np.max(b[:, 1])) for b in boundaries)
    if not hi > lo:
        raise InvalidParameterError(f"Boundaries share no ordinate range ({lo:.4f} >= {hi:.4f})")
    return np.linspace(lo, hi, n + 2)[1:-1]


def apex_parameter(cp: ControlPolygon, center: float) -> float:
    """Curve parameter s where Gamma crosses the line x2 = center"""
    return float(brentq(lambda s: curve_points(cp, np.array([s]))[0, 1] - center, 0.0, 1.0, xtol=1e-14))


def apex_normal_angle(cp: ControlPolygon, center: float) -> Tuple[float, float]:
    """(apex abscissa, angle in radians between the outward normal and e1)"""
    jet = eval_jet(cp, apex_parameter(cp, center))
    return float(jet.x[0]), float(abs(np.arctan2(jet.normal[1], jet.normal[0])))


def _polyline_distance(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest segment of polyline"""
    a = polyline[:-1][None, :, :]
    d = (polyline[1:] - polyline[:-1])[None, :, :]
    p = points[:, None, :]
    t = np.clip(np.sum((p - a) * d, axis=2) / np.maximum(np.sum(d * d, axis=2), 1e-300), 0.0, 1.0)
    gap = p - (a + t[:, :, None] * d)
    return np.sqrt(np.min(np.sum(gap * gap, axis=2), axis=1))


def reflection_mismatch(points: np.ndarray, center: float) -> float:
    """Symmetric Hausdorff distance between Gamma and its reflection about x2 = center"""
    mirrored = reflect_across(points, center)[::-1]
    return float(max(np.max(_polyline_distance(points, mirrored)), np.max(_polyline_distance(mirrored, points))))


def require_passed(report: StudyReport) -> StudyReport:
    if not report.passed:
        names = ", ".join(a.name for a in report.assertions if not a.passed)
        raise StudyAssertionError(f"Study {report.study} failed: {names}", report=report)
    return report


def _assert(report: StudyReport, name: str, passed: bool, detail: str = "") -> None:
    report.assertions.append(StudyAssertion(name=name, passed=bool(passed), detail=detail))
    if passed:
        logger.info(f"✅ {report.study}/{name} {detail}")
    else:
        logger.warning(f"❌ {report.study}/{name} {detail}")


def _check_increasing(values: Sequence[float], what: str) -> None:
    if any(v <= 0.0 for v in values):
        raise InvalidParameterError(f"{what} must be positive, got {list(values)}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidParameterError(f"{what} must be strictly increasing, got {list(values)}")


# ============================================
# Study configurations
# ============================================

def segment_config(base: RunConfig, a: float, r_horizontal: Optional[float] = None) -> RunConfig:
    """
    Config of problem (F_a): K half-length a, start shape grown with a so the
    tip gap and radial margin stay those of base, mesh size scaled with the
    square root of the start area.
    """
    r_vertical = a + (base.r0 - base.kappa1)
    base_horizontal = base.r_horizontal if base.r_horizontal is not None else base.r0
    r_horizontal = base_horizontal if r_horizontal is None else r_horizontal
    ratio = (r_horizontal * r_vertical) / (base_horizontal * base.r0)
    return base.with_changes(
        kappa1=a,
        kappa2=a + (base.kappa2 - base.kappa1),
        r0=r_vertical,
        r_horizontal=r_horizontal,
        target_h=base.target_h * float(np.sqrt(ratio)),
    )


def homothetic_config(direct: RunConfig, a: float) -> RunConfig:
    """
    The problem of `direct` (K half-length a, datum 1) mapped by x -> (x - c) / a:
    K half-length 1 and gradient datum a.
    """
    return direct.with_changes(
        kappa1=direct.kappa1 / a,
        kappa2=direct.kappa2 / a,
        r0=direct.r0 / a,
        r_horizontal=(direct.r_horizontal if direct.r_horizontal is not None else direct.r0) / a,
        neumann_datum=direct.neumann_datum * a,
        target_h=direct.target_h / a,
    )


def _final_gamma(outcome: SolveOutcome) -> np.ndarray:
    return outcome.evaluation.boundary.sample.x


def _solve_record(study: str, a: float, outcome: SolveOutcome) -> StudyRecord:
    state = outcome.state
    return StudyRecord(
        study=study,
        parameter=a,
        status=state.status,
        observables={
            "iterations": float(state.iterate),
            "j_eps_final": float(state.j_eps),
            "kappa_extent": float(state.history[-1].kappa_extent),
        },
        histories={"j_eps": [float(j) for j in state.j_history]},
    )


# ============================================
# Symmetry
# ============================================

def study_symmetry(config: RunConfig, continuation: bool = False) -> StudyReport:
    """Solve, then measure the reflection mismatch and the apex normal angle"""
    report = StudyReport(study="symmetry")
    center = config.center

    initial = config.initial_polygon()
    initial_mismatch = reflection_mismatch(sample_curve(initial, config.n_samples).x, center)
    outcome = solve_config(config, continuation=continuation)
    final = outcome.state.polygon
    mismatch = reflection_mismatch(_final_gamma(outcome), center)
    apex_x1, angle = apex_normal_angle(final, center)

    record = _solve_record("symmetry", config.kappa1, outcome)
    record.observables.update(
        initial_mismatch=initial_mismatch,
        mismatch=mismatch,
        apex_x1=apex_x1,
        apex_normal_angle=angle,
    )
    report.records.append(record)

    _assert(report, "reflection", mismatch <= SYMMETRY_TOLERANCE, f"mismatch={mismatch:.3e}")
    _assert(report, "apex_normal", angle <= APEX_ANGLE_TOLERANCE, f"angle={angle:.3e} rad")
    return report


# ============================================
# Monotonicity and asymptotics
# ============================================

def _solve_segments(base: RunConfig, a_list: Sequence[float], r_horizontal: Optional[float]):
    outcomes = []
    for a in a_list:
        config = segment_config(base, a, r_horizontal)
        logger.info(f"Solving (F_a) with a={a:g}, target_h={config.target_h:.4f}")
        outcomes.append(solve_config(config))
    return outcomes


def _profile_records(study: str, a_list, outcomes, center: float) -> Tuple[List[StudyRecord], np.ndarray]:
    gammas = [_final_gamma(o) for o in outcomes]
    grid = shared_grid(gammas)
    records = []
    for a, outcome, gamma in zip(a_list, outcomes, gammas):
        record = _solve_record(study, a, outcome)
        profile = gamma_profile(gamma, grid)
        record.observables["m_a"] = float(gamma_profile(gamma, np.array([center]))[0])
        record.profile_grid = grid.tolist()
        record.profile = profile.tolist()
        records.append(record)
    return records, grid


def study_monotonicity(config: RunConfig, a_list: Sequence[float]) -> StudyReport:
    """psi_a <= psi_b + tol on the shared ordinate grid for every a < b"""
    a_list = [float(a) for a in a_list]
    _check_increasing(a_list, "a_list")
    report = StudyReport(study="monotonicity")
    outcomes = _solve_segments(config, a_list, None)
    report.records, _ = _profile_records("monotonicity", a_list, outcomes, config.center)

    worst, pair = -np.inf, None
    for i, lower in enumerate(report.records):
        for upper in report.records[i + 1:]:
            excess = np.nanmax(np.asarray(lower.profile) - np.asarray(upper.profile))
            if excess > worst:
                worst, pair = float(excess), (lower.parameter, upper.parameter)
    if pair is None:
        _assert(report, "inclusion", True, "single domain")
    else:
        _assert(
            report,
            "inclusion",
            worst <= INCLUSION_TOLERANCE,
            f"max psi_a - psi_b = {worst:.3e} at (a, b) = {pair}",
        )

    apex = [r.observables["m_a"] for r in report.records]
    drops = [b - a for a, b in zip(apex, apex[1:])]
    _assert(
        report,
        "apex_nondecreasing",
        all(d >= -TREND_TOLERANCE for d in drops),
        "m_a = " + ", ".join(f"{m:.4f}" for m in apex),
    )
    return report


def flatness_deviation(record: StudyRecord, center: float, b_window: float) -> float:
    """sup over |x2 - c2| <= b of |psi_a(x2) - m_a|"""
    grid = np.asarray(record.profile_grid)
    profile = np.asarray(record.profile)
    window = np.abs(grid - center) <= b_window
    if not np.any(window):
        raise InvalidParameterError(f"b_window={b_window} contains no grid ordinate")
    return float(np.nanmax(np.abs(profile[window] - record.observables["m_a"])))


def study_asymptotics(
    config: RunConfig,
    a_list: Sequence[float],
    b_window: float = 0.25,
    homothety: bool = False,
) -> StudyReport:
    """
    m_a nondecreasing and <= 1 (within tolerance), and the flatness deviation
    over |x2 - c2| <= b_window nonincreasing in a. With homothety, each
    direct solve is also compared with the solve of the rescaled problem.
    """
    a_list = [float(a) for a in a_list]
    _check_increasing(a_list, "a_list")
    if not 0.0 < b_window < min(a_list):
        raise InvalidParameterError(f"b_window must lie in (0, min(a_list)), got {b_window}")

    report = StudyReport(study="asymptotics")
    outcomes = _solve_segments(config, a_list, ASYMPTOTICS_RADIUS)
    report.records, grid = _profile_records("asymptotics", a_list, outcomes, config.center)
    for record in report.records:
        record.observables["flatness"] = flatness_deviation(record, config.center, b_window)

    apex = [r.observables["m_a"] for r in report.records]
    flat = [r.observables["flatness"] for r in report.records]
    _assert(
        report,
        "apex_nondecreasing",
        all(b - a >= -TREND_TOLERANCE for a, b in zip(apex, apex[1:])),
        "m_a = " + ", ".join(f"{m:.4f}" for m in apex),
    )
    _assert(report, "apex_bounded", max(apex) <= 1.0 + TREND_TOLERANCE, f"max m_a = {max(apex):.4f}")
    _assert(
        report,
        "flattening",
        all(b - a <= TREND_TOLERANCE for a, b in zip(flat, flat[1:])),
        "deviation = " + ", ".join(f"{d:.4f}" for d in flat),
    )

    if homothety:
        worst = 0.0
        for a, outcome, record in zip(a_list, outcomes, report.records):
            direct = segment_config(config, a, ASYMPTOTICS_RADIUS)
            scaled = solve_config(homothetic_config(direct, a))
            # map the K-half-length-1 solution back: x -> c + a (x - c)
            back = _final_gamma(scaled).copy()
            back[:, 0] *= a
            back[:, 1] = config.center + a * (back[:, 1] - config.center)
            gamma = _final_gamma(outcome)
            mismatch = float(max(np.max(_polyline_distance(gamma, back)), np.max(_polyline_distance(back, gamma))))
            record.observables["homothety_mismatch"] = mismatch
            worst = max(worst, mismatch)
        _assert(report, "homothety", worst <= HOMOTHETY_TOLERANCE, f"max mismatch = {worst:.3e}")
    return report


# ============================================
# Penalization
# ============================================

def study_penalization(config: RunConfig, eps_list: Sequence[float]) -> StudyReport:
    """H1 distance between u2eps and u2 on the fixed initial domain for each eps"""
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(e <= 0.0 for e in eps_list):
        raise InvalidParameterError(f"eps_list must be positive and nonempty, got {eps_list}")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InvalidParameterError(f"eps_list must be strictly decreasing, got {eps_list}")

    report = StudyReport(study="penalization")
    ev = ShapeOptimizer.from_config(config).evaluate(config.initial_polygon())
    penalty = config.penalty()
    u2 = solve_mixed_state(ev.mesh, penalty.neumann_datum, ev.system)

    distances = []
    for eps in eps_list:
        u2eps = solve_robin_state(ev.mesh, penalty.with_eps(eps), ev.system)
        d = h1_distance(ev.mesh, u2eps, u2, ev.system)
        distances.append(d)
        logger.info(f"eps={eps:g}: |u2eps - u2|_H1 = {d:.6e}")
        report.records.append(
            StudyRecord(study="penalization", parameter=eps, status="solved", observables={"h1_distance": d})
        )

    _assert(
        report,
        "finite_positive",
        all(np.isfinite(d) and d > 0.0 for d in distances),
        "distances = " + ", ".join(f"{d:.4e}" for d in distances),
    )
    _assert(
        report,
        "nonincreasing",
        all(b <= (1.0 + PENALIZATION_SLACK) * a for a, b in zip(distances, distances[1:])),
        f"slack {PENALIZATION_SLACK:.0%}",
    )
    return report
