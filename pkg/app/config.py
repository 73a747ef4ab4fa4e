"""Configuration management: environment settings and run configuration files"""
import logging
import os
from pathlib import Path
from typing import Dict, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, model_validator

from app.domain.entities import ControlPolygon
from app.domain.exceptions import ConfigError
from app.domain.value_objects import AxisSpec, OptimizerParams, PenaltyParams
from app.services.bezier_geometry import half_ellipse_polygon

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)


class Settings:
    """Process-level settings - only what the CLI needs"""

    def __init__(self):
        # Logging
        self.log_level = os.getenv("LOG_LEVEL", "INFO").upper()

        # Where run artifacts go when --out is not given
        self.output_dir = os.getenv("FREEBOUND_OUTPUT_DIR", "runs")

        # Seed for randomized checks when neither the config nor --seed sets one
        self.seed = self._get_int("FREEBOUND_SEED", 0)

    def _get_int(self, key: str, default: int) -> int:
        raw = os.getenv(key, "").strip()
        if not raw:
            return default
        try:
            return int(raw)
        except ValueError:
            logging.getLogger(__name__).warning(
                f"⚠️  Ignoring non-integer {key}={raw!r}, using {default}"
            )
            return default


settings = Settings()


# ============================================
# Run configuration
# ============================================

# a config file has to state the geometry explicitly
REQUIRED_KEYS = ("m", "kappa1", "kappa2", "center", "r0")


class RunConfig(BaseModel):
    """
    One run of the solver. Defaults reproduce the published experiment:
    m=40 control points, 400 samples, K half-length 0.129, tips at
    0.5 -/+ 0.233, half-circle of radius 0.3, eps=0.1, q=4, mu=10, eta=0.5,
    tau_r=5e-4.
    """

    model_config = {"extra": "forbid", "frozen": True}

    # geometry
    m: int = Field(40, ge=4, description="Bezier degree")
    n_samples: int = Field(400, ge=2, description="Gamma samples")
    kappa1: float = Field(0.129, gt=0.0, description="Half-length of K")
    kappa2: float = Field(0.233, gt=0.0, description="Initial tip distance from the center")
    center: float = Field(0.5, description="Center of K on the axis")
    r0: float = Field(0.3, gt=0.0, description="Initial (vertical) radius")
    r_horizontal: Optional[float] = Field(None, gt=0.0, description="Initial horizontal radius, r0 if unset")

    # penalization
    eps: float = Field(0.1, gt=0.0)
    q: float = Field(4.0, gt=0.0)
    neumann_datum: float = Field(1.0, gt=0.0, description="Gradient datum on Gamma")

    # optimizer
    mu: float = Field(10.0, gt=0.0)
    eta: float = Field(0.5, gt=0.0, lt=1.0)
    lam: Optional[float] = Field(None, gt=0.0, description="Sufficient decrease scale, 100*mu if unset")
    tau_r: float = Field(5e-4, gt=0.0)
    max_iters: int = Field(500, ge=1)
    max_backtracks: int = Field(30, ge=0)
    delta_l: float = Field(1e-3, gt=0.0)
    continuation_steps: int = Field(3, ge=0)

    # mesh
    target_h: float = Field(0.02, gt=0.0)
    min_angle: float = Field(20.0, gt=0.0, lt=34.0)

    # output and checks
    output_dir: str = Field(default_factory=lambda: settings.output_dir)
    snapshot_stride: int = Field(0, ge=0, description="SVG snapshot every N iterates, 0 = off")
    seed: int = Field(default_factory=lambda: settings.seed)
    grad_directions: int = Field(3, ge=0)
    grad_t: float = Field(1e-3, gt=0.0)

    @model_validator(mode="after")
    def _check_geometry(self) -> "RunConfig":
        if not self.kappa2 > self.kappa1:
            raise ValueError(f"kappa2 ({self.kappa2}) must exceed kappa1 ({self.kappa1})")
        if not self.r0 > self.kappa2:
            raise ValueError(f"r0 ({self.r0}) must exceed kappa2 ({self.kappa2})")
        return self

    # --------------------------------------------
    # Domain objects
    # --------------------------------------------

    @property
    def effective_lam(self) -> float:
        return self.lam if self.lam is not None else 100.0 * self.mu

    def axis(self) -> AxisSpec:
        return AxisSpec(center=self.center, half_length=self.kappa1)

    def penalty(self) -> PenaltyParams:
        return PenaltyParams(eps=self.eps, q=self.q, neumann_datum=self.neumann_datum)

    def optimizer_params(self) -> OptimizerParams:
        return OptimizerParams(
            mu=self.mu,
            eta=self.eta,
            lam=self.effective_lam,
            tau_r=self.tau_r,
            max_iters=self.max_iters,
            max_backtracks=self.max_backtracks,
            delta_l=self.delta_l,
        )

    def initial_polygon(self) -> ControlPolygon:
        """Half-ellipse start (half-circle of radius r0 by default)"""
        return half_ellipse_polygon(
            self.m,
            self.center,
            self.kappa2,
            self.r_horizontal if self.r_horizontal is not None else self.r0,
            self.r0,
        )

    def with_changes(self, **changes) -> "RunConfig":
        """Validated copy with some fields replaced"""
        data = self.model_dump()
        data.update(changes)
        return load_config_dict(data)


def load_config_dict(data: Dict[str, object]) -> RunConfig:
    """Validate a mapping into a RunConfig, wrapping pydantic errors in ConfigError"""
    try:
        return RunConfig(**data)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(p) for p in first.get("loc", ())) or None
        raise ConfigError(f"{key or 'config'}: {first.get('msg')}", key=key) from e


def parse_config_text(text: str, require_geometry: bool = True) -> RunConfig:
    """
    Parse flat `key = value` text.

    Rules: `#` starts a comment, blank lines are ignored, keys are lowercase
    field names of RunConfig, each key appears once. Values are parsed by the
    RunConfig field types.

    Raises:
        ConfigError: malformed line, unknown or duplicate key, missing
            geometry key or invalid value
    """
    values: Dict[str, str] = {}
    lines: Dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or key != key.lower():
            raise ConfigError(f"keys must be lowercase and non-empty, got {key!r}", line=number, key=key)
        if key not in RunConfig.model_fields:
            raise ConfigError(f"unknown key {key!r}", line=number, key=key)
        if key in values:
            raise ConfigError(
                f"duplicate key {key!r} (first set on line {lines[key]})", line=number, key=key
            )
        if value == "":
            raise ConfigError(f"missing value for {key!r}", line=number, key=key)
        values[key] = value
        lines[key] = number

    if require_geometry:
        for key in REQUIRED_KEYS:
            if key not in values:
                raise ConfigError(f"missing required key {key!r}", key=key)

    try:
        return RunConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        key = str((first.get("loc") or ("config",))[0])
        raise ConfigError(f"{key}: {first.get('msg')}", line=lines.get(key), key=key) from e


def load_config(path: Union[str, Path, None]) -> RunConfig:
    """Read a config file, or return the default RunConfig when path is None"""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    config = parse_config_text(text)
    logger.debug(f"Loaded config {path}: {config.model_dump()}")
    return config

