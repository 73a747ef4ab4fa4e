"""
Bezier Geometry Service - Bernstein basis and differential geometry of the free boundary.

The free boundary Gamma is the open Bezier curve

    x(s) = sum_k B_{k,m}(s) p_k,    s in [0, 1],

traversed counterclockwise around the domain (lower tip at s = 0, upper tip at
s = 1). Conventions used everywhere downstream:
- normal n = (x2', -x1') / |x'| points out of the domain
- curvature H = (x' x x'') / |x'|^3 is the geometric curvature, positive where
  the domain is locally convex
- second derivatives use the exact closed form (Bernstein derivative applied twice)
"""

import logging
from typing import Union

import numpy as np
from scipy.special import binom

from app.domain.entities import ControlPolygon, CurveJet, CurveSample
from app.domain.exceptions import DegenerateParameterizationError, InvalidParameterError

logger = logging.getLogger(__name__)

# |x'(s)| below this is treated as a degenerate parameterization
SPEED_TOLERANCE = 1e-12

ArrayLike = Union[float, np.ndarray]


# ============================================
# Bernstein basis
# ============================================

def _check_index(k: int, m: int) -> None:
    if m < 0 or not 0 <= k <= m:
        raise InvalidParameterError(f"Bernstein index must satisfy 0 <= k <= m, got k={k}, m={m}")


def _check_parameter(s: ArrayLike) -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"Bezier parameter must lie in [0, 1], got {s}")
    return arr


def _raw_bernstein(k: int, m: int, s: np.ndarray) -> np.ndarray:
    """B_{k,m}(s) with the convention B_{k,m} = 0 for k < 0 or k > m"""
    if k < 0 or k > m or m < 0:
        return np.zeros_like(s)
    return binom(m, k) * s ** k * (1.0 - s) ** (m - k)


def bernstein(k: int, m: int, s: ArrayLike) -> ArrayLike:
    """
    Bernstein polynomial B_{k,m}(s) = C(m, k) s^k (1 - s)^(m - k).

    Args:
        k: index, 0 <= k <= m
        m: degree
        s: parameter (scalar or array) in [0, 1]

    Raises:
        InvalidParameterError: k or s out of range
    """
    _check_index(k, m)
    arr = _check_parameter(s)
    value = _raw_bernstein(k, m, arr)
    return float(value) if value.ndim == 0 else value


def bernstein_derivative(k: int, m: int, s: ArrayLike) -> ArrayLike:
    """
    First derivative B'_{k,m}(s) = m (B_{k-1,m-1}(s) - B_{k,m-1}(s)).

    The terms with index outside [0, m-1] vanish, so B'_{0,m} = -m B_{0,m-1}
    and B'_{m,m} = m B_{m-1,m-1}.
    """
    _check_index(k, m)
    arr = _check_parameter(s)
    value = m * (_raw_bernstein(k - 1, m - 1, arr) - _raw_bernstein(k, m - 1, arr))
    return float(value) if value.ndim == 0 else value


def bernstein_second_derivative(k: int, m: int, s: ArrayLike) -> ArrayLike:
    """B''_{k,m}(s) = m (m-1) (B_{k-2,m-2} - 2 B_{k-1,m-2} + B_{k,m-2})"""
    _check_index(k, m)
    arr = _check_parameter(s)
    if m < 2:
        value = np.zeros_like(arr)
    else:
        value = m * (m - 1) * (
            _raw_bernstein(k - 2, m - 2, arr)
            - 2.0 * _raw_bernstein(k - 1, m - 2, arr)
            + _raw_bernstein(k, m - 2, arr)
        )
    return float(value) if value.ndim == 0 else value


def basis_matrix(m: int, s: np.ndarray, order: int = 0) -> np.ndarray:
    """
    Matrix of basis values, shape (len(s), m+1): entry [i, k] is the
    order-th derivative of B_{k,m} at s_i (order in {0, 1, 2}).
    """
    funcs = {0: bernstein, 1: bernstein_derivative, 2: bernstein_second_derivative}
    if order not in funcs:
        raise InvalidParameterError(f"Basis derivative order must be 0, 1 or 2, got {order}")
    s = np.atleast_1d(_check_parameter(s))
    return np.stack([np.asarray(funcs[order](k, m, s)) for k in range(m + 1)], axis=1)


# ============================================
# Curve evaluation
# ============================================

def _frame(dx: np.ndarray, ddx: np.ndarray, s: np.ndarray):
    """Unit tangent, outward normal, curvature and speed from x' and x''"""
    speed = np.linalg.norm(dx, axis=1)
    bad = np.flatnonzero(speed < SPEED_TOLERANCE)
    if bad.size:
        i = int(bad[0])
        raise DegenerateParameterizationError(float(s[i]), float(speed[i]))
    tangent = dx / speed[:, None]
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
    cross = dx[:, 0] * ddx[:, 1] - dx[:, 1] * ddx[:, 0]
    curvature = cross / speed ** 3
    return tangent, normal, curvature, speed


def eval_jet(cp: ControlPolygon, s: float) -> CurveJet:
    """
    Point, derivative, unit tangent, outward normal, curvature and speed at s.

    Raises:
        InvalidParameterError: s outside [0, 1]
        DegenerateParameterizationError: |x'(s)| below SPEED_TOLERANCE
    """
    s_arr = np.atleast_1d(_check_parameter(s))
    m = cp.degree
    x = basis_matrix(m, s_arr, 0) @ cp.points
    dx = basis_matrix(m, s_arr, 1) @ cp.points
    ddx = basis_matrix(m, s_arr, 2) @ cp.points
    tangent, normal, curvature, speed = _frame(dx, ddx, s_arr)
    # endpoint interpolation is exact, not just up to rounding
    if s_arr[0] == 0.0:
        x[0] = cp.points[0]
    elif s_arr[0] == 1.0:
        x[0] = cp.points[-1]
    return CurveJet(
        s=float(s_arr[0]),
        x=x[0],
        dx=dx[0],
        tangent=tangent[0],
        normal=normal[0],
        curvature=float(curvature[0]),
        speed=float(speed[0]),
    )


def sample_curve(cp: ControlPolygon, n_samples: int) -> CurveSample:
    """
    Sample the curve at s_i = i / (n_samples - 1).

    The returned weights implement the composite trapezoidal rule in s for
    integral_0^1 f(s) |x'(s)| ds.

    Raises:
        InvalidParameterError: n_samples < 2
        DegenerateParameterizationError: zero speed at some sample
    """
    if n_samples < 2:
        raise InvalidParameterError(f"n_samples must be >= 2, got {n_samples}")

    s = np.linspace(0.0, 1.0, n_samples)
    m = cp.degree
    x = basis_matrix(m, s, 0) @ cp.points
    x[0], x[-1] = cp.points[0], cp.points[-1]
    dx = basis_matrix(m, s, 1) @ cp.points
    ddx = basis_matrix(m, s, 2) @ cp.points
    tangent, normal, curvature, speed = _frame(dx, ddx, s)

    trapezoid = np.full(n_samples, 1.0 / (n_samples - 1))
    trapezoid[[0, -1]] *= 0.5

    return CurveSample(
        s=s,
        x=x,
        dx=dx,
        ddx=ddx,
        tangent=tangent,
        normal=normal,
        curvature=curvature,
        speed=speed,
        weights=trapezoid * speed,
    )


def curve_points(cp: ControlPolygon, s: np.ndarray) -> np.ndarray:
    """Positions x(s) only, shape (len(s), 2)"""
    return basis_matrix(cp.degree, s, 0) @ cp.points


# ============================================
# Control polygon construction
# ============================================

def elevate_degree(cp: ControlPolygon) -> ControlPolygon:
    """
    Degree elevation m -> m+1:

        q_k = (k / (m+1)) p_{k-1} + (1 - k / (m+1)) p_k,   k = 0..m+1

    The curve is unchanged and the tip tangency is preserved.
    """
    p = cp.points
    m = cp.degree
    k = np.arange(m + 2)[:, None] / (m + 1)
    padded_prev = np.vstack([p[:1], p])
    padded_curr = np.vstack([p, p[-1:]])
    q = k * padded_prev + (1.0 - k) * padded_curr
    # tangency holds exactly in theory; remove rounding on the axis
    q[[0, 1, m, m + 1], 0] = 0.0
    return ControlPolygon(q)


def half_ellipse_polygon(
    m: int,
    center: float,
    kappa2: float,
    r_horizontal: float,
    r_vertical: float,
) -> ControlPolygon:
    """
    Initial control polygon shaped like a half-ellipse around (0, center).

    p_0 = (0, center - kappa2) and p_m = (0, center + kappa2) are the tips.
    p_1 and p_{m-1} sit on the axis at the ellipse ordinates of the first
    angular step, so the tip tangents point away from K. The interior points
    p_2..p_{m-2} lie on the half-ellipse at equally spaced angles k*pi/m.

    With r_horizontal = r_vertical = r0 this is the half-circle start.
    """
    if m < 4:
        raise InvalidParameterError(f"half_ellipse_polygon needs m >= 4, got {m}")
    if not (r_horizontal > 0.0 and r_vertical > 0.0):
        raise InvalidParameterError(
            f"Ellipse radii must be > 0, got ({r_horizontal}, {r_vertical})"
        )
    if not 0.0 < kappa2 < r_vertical * np.cos(np.pi / m):
        raise InvalidParameterError(
            f"kappa2 must lie in (0, r_vertical*cos(pi/m)) so the tips sit inside "
            f"the ellipse ends, got kappa2={kappa2}, r_vertical={r_vertical}"
        )

    phi = np.arange(m + 1) * np.pi / m
    points = np.stack(
        [r_horizontal * np.sin(phi), center - r_vertical * np.cos(phi)], axis=1
    )
    points[0] = (0.0, center - kappa2)
    points[m] = (0.0, center + kappa2)
    points[1, 0] = 0.0
    points[m - 1, 0] = 0.0

    logger.debug(
        f"Half-ellipse polygon: m={m}, center={center}, kappa2={kappa2}, "
        f"radii=({r_horizontal}, {r_vertical})"
    )
    return ControlPolygon(points)
