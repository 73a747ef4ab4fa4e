"""
Value Objects for the free boundary solver.

Value objects are immutable, self-validating, and enforce the parameter ranges
the solver relies on. They prevent silent misuse such as:
- a penalization with non-positive epsilon or exponent
- a Dirichlet segment K of zero length
- a line search with a backtracking ratio outside (0, 1)

Every object raises InvalidParameterError (a ValueError) naming the offending field.
"""

from dataclasses import dataclass
from enum import IntEnum

from .exceptions import InvalidParameterError


class Marker(IntEnum):
    """
    Boundary-condition label of a boundary edge.

    K:     fixed Dirichlet segment on the axis (u = 1)
    L:     free portion of the axis, (dOmega minus K) on {x1 = 0}
    GAMMA: free boundary, the Bezier curve in the open half-plane
    """

    K = 1
    L = 2
    GAMMA = 3

    @property
    def label(self) -> str:
        """Short label used in CSV/SVG exports"""
        return {Marker.K: "K", Marker.L: "L", Marker.GAMMA: "Gamma"}[self]


@dataclass(frozen=True)
class AxisSpec:
    """
    The Dirichlet segment K = {0} x [center - half_length, center + half_length].

    Example: AxisSpec(center=0.5, half_length=0.129) is the published setup.
    """

    center: float
    half_length: float

    def __post_init__(self):
        if not self.half_length > 0.0:
            raise InvalidParameterError(
                f"AxisSpec.half_length must be > 0, got {self.half_length}"
            )

    @property
    def lower(self) -> float:
        """Ordinate of the lower end of K"""
        return self.center - self.half_length

    @property
    def upper(self) -> float:
        """Ordinate of the upper end of K"""
        return self.center + self.half_length

    def __repr__(self) -> str:
        return f"AxisSpec(center={self.center}, half_length={self.half_length})"


@dataclass(frozen=True)
class PenaltyParams:
    """
    Parameters of the penalization psi_eps(x1) = eps^-1 * max(1 - eps^-q x1, 0)^2.

    neumann_datum is the Bernoulli gradient datum (|grad u| = datum on Gamma);
    1.0 is the original problem, other values are its homothetic images.
    """

    eps: float
    q: float
    neumann_datum: float = 1.0

    def __post_init__(self):
        if not self.eps > 0.0:
            raise InvalidParameterError(f"PenaltyParams.eps must be > 0, got {self.eps}")
        if not self.q > 0.0:
            raise InvalidParameterError(f"PenaltyParams.q must be > 0, got {self.q}")
        if not self.neumann_datum > 0.0:
            raise InvalidParameterError(
                f"PenaltyParams.neumann_datum must be > 0, got {self.neumann_datum}"
            )

    @property
    def beta(self) -> float:
        """Support radius beta_eps = eps^q of psi_eps"""
        return self.eps ** self.q

    def with_eps(self, eps: float) -> "PenaltyParams":
        """Copy with a different epsilon (used by the continuation schedule)"""
        return PenaltyParams(eps=eps, q=self.q, neumann_datum=self.neumann_datum)


@dataclass(frozen=True)
class OptimizerParams:
    """
    Gradient-projection parameters.

    mu:             initial step scale, alpha = mu * eta^a
    eta:            backtracking ratio in (0, 1)
    lam:            sufficient-decrease scale (test uses alpha / lam)
    tau_r:          relative stopping tolerance
    max_iters:      outer iteration cap
    max_backtracks: line-search cap on a
    delta_l:        minimal distance kept between the tips and K
    """

    mu: float = 10.0
    eta: float = 0.5
    lam: float = 1000.0
    tau_r: float = 5e-4
    max_iters: int = 500
    max_backtracks: int = 30
    delta_l: float = 1e-3

    def __post_init__(self):
        if not self.mu > 0.0:
            raise InvalidParameterError(f"OptimizerParams.mu must be > 0, got {self.mu}")
        if not 0.0 < self.eta < 1.0:
            raise InvalidParameterError(
                f"OptimizerParams.eta must be in (0, 1), got {self.eta}"
            )
        if not self.lam > 0.0:
            raise InvalidParameterError(f"OptimizerParams.lam must be > 0, got {self.lam}")
        if not self.tau_r > 0.0:
            raise InvalidParameterError(
                f"OptimizerParams.tau_r must be > 0, got {self.tau_r}"
            )
        if self.max_iters < 1:
            raise InvalidParameterError(
                f"OptimizerParams.max_iters must be >= 1, got {self.max_iters}"
            )
        if self.max_backtracks < 0:
            raise InvalidParameterError(
                f"OptimizerParams.max_backtracks must be >= 0, got {self.max_backtracks}"
            )
        if not self.delta_l > 0.0:
            raise InvalidParameterError(
                f"OptimizerParams.delta_l must be > 0, got {self.delta_l}"
            )

    def step(self, a: int) -> float:
        """Trial step alpha = mu * eta^a"""
        return self.mu * self.eta ** a
