"""Run configuration: one YAML file, strictly validated.

Unknown keys are rejected at every level. Validation covers the
preconditions of the numerical layers (grid sizes, mask intervals,
control/observation overlap for control runs, weight parameters), so a
bad file fails before any computation starts.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .grid import Grid, Mask, build_grid, indicator_mask, require_overlap
from .experiments import Pulse, pulse_field, pulse_source
from .sampling import random_unit_field
from .weights import WeightParams, WeightSpec


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    L: float = Field(1.0, gt=0)
    N: int = Field(64, ge=8)
    T: float = Field(1.0, gt=0)
    M: int = Field(256, ge=8)

    def build(self) -> Grid:
        return build_grid(self.L, self.N, self.T, self.M)


Interval = Tuple[float, float]


class MasksConfig(_Strict):
    omega: Interval = (0.3, 0.6)
    obs: Interval = (0.5, 0.8)

    @field_validator("omega", "obs")
    @classmethod
    def _ordered(cls, v):
        if not v[0] < v[1]:
            raise ValueError(f"interval {v} must satisfy a < b")
        return v


class WeightsConfig(_Strict):
    lam: Optional[float] = Field(None, gt=1, description="defaults to 8 (T + T^2)")
    mu: float = Field(1.5, gt=1)
    x0: Optional[float] = Field(None, lt=0, description="defaults to -L/2")

    def build(self, grid: Grid) -> WeightParams:
        p = WeightParams.default(grid.T, grid.L, self.lam, self.mu)
        return p if self.x0 is None else WeightParams(p.lam, p.mu, self.x0, p.T, p.L)


class ControlConfig(_Strict):
    epsilons: List[float] = Field(default_factory=lambda: [1e-2, 1e-4, 1e-6], min_length=1)
    mode: Literal["plain", "carleman_weighted"] = "plain"
    cg_tol: float = Field(1e-10, gt=0, lt=1)
    cg_maxit: int = Field(2000, ge=1)
    outer_tol: float = Field(1e-8, gt=0)
    outer_maxit: int = Field(10, ge=1)
    smallness_c: float = Field(0.0, ge=0)
    smallness_delta: float = Field(1.0, gt=0)
    test_directions: int = Field(10, ge=0)
    workers: int = Field(1, ge=1)

    @field_validator("epsilons")
    @classmethod
    def _positive(cls, v):
        if any(not e > 0 for e in v):
            raise ValueError("every epsilon must be positive")
        return v


class PulseConfig(_Strict):
    amplitude: float = 1.0
    center: float
    width: float = Field(gt=0)
    shape: Literal["gaussian", "bump"] = "gaussian"
    time: Literal["constant", "sine", "ramp"] = "constant"


class InitialConfig(_Strict):
    pulses: List[PulseConfig] = Field(default_factory=list)
    random_norm: float = Field(0.0, ge=0, description="adds a seeded low-mode field of this norm")


class PhysicsConfig(_Strict):
    zeta: complex = 0j
    u0: InitialConfig = Field(default_factory=InitialConfig)
    f0: List[PulseConfig] = Field(default_factory=list)
    f1: List[PulseConfig] = Field(default_factory=list)


class InsensitizeConfig(_Strict):
    directions: int = Field(10, ge=1)
    taus: List[float] = Field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3], min_length=3)
    epsilon: float = Field(1e-6, gt=0)
    control_file: Optional[str] = None

    @field_validator("taus")
    @classmethod
    def _decreasing(cls, v):
        if any(not t > 0 for t in v) or any(b >= a for a, b in zip(v[:-1], v[1:])):
            raise ValueError("taus must be positive and strictly decreasing")
        return v


class AuditConfig(_Strict):
    lambdas: Optional[List[float]] = None
    lambda_factors: List[float] = Field(default_factory=lambda: [4.0, 8.0, 16.0])
    mus: List[float] = Field(default_factory=lambda: [1.5], min_length=1)
    samples: int = Field(20, ge=1)
    evaluator: Literal["carleman", "modified", "observability"] = "carleman"
    source_scale: float = Field(0.0, ge=0)
    rho: Tuple[str, str, str] = ("lam^7 mu^8 nu^7 sigma^2", "lam nu sigma^2", "sigma^2")

    def lambda_values(self, T: float) -> List[float]:
        if self.lambdas is not None:
            return list(self.lambdas)
        return [f * (T + T * T) for f in self.lambda_factors]

    @model_validator(mode="after")
    def _check(self):
        lams = self.lambdas if self.lambdas is not None else self.lambda_factors
        if not lams:
            raise ValueError("need at least one lambda")
        if self.lambdas is not None and any(not v > 1 for v in self.lambdas):
            raise ValueError("lambda values must exceed 1")
        if any(not m > 1 for m in self.mus):
            raise ValueError("mu values must exceed 1")
        for r in self.rho:
            WeightSpec.parse(r)
        return self


class ConvergenceConfig(_Strict):
    grids: List[Tuple[int, int]] = Field(default_factory=lambda: [(32, 64), (64, 128), (128, 256)])
    zeta: complex = 0j
    amplitude: float = 1.0


class RunConfig(_Strict):
    grid: GridConfig = Field(default_factory=GridConfig)
    masks: MasksConfig = Field(default_factory=MasksConfig)
    weights: WeightsConfig = Field(default_factory=WeightsConfig)
    control: ControlConfig = Field(default_factory=ControlConfig)
    physics: PhysicsConfig = Field(default_factory=PhysicsConfig)
    insensitize: InsensitizeConfig = Field(default_factory=InsensitizeConfig)
    audit: AuditConfig = Field(default_factory=AuditConfig)
    convergence: ConvergenceConfig = Field(default_factory=ConvergenceConfig)
    seed: int = 0
    output: str = "out"

    @model_validator(mode="after")
    def _domain(self):
        L = self.grid.L
        for name in ("omega", "obs"):
            a, b = getattr(self.masks, name)
            if a < 0 or b > L:
                raise ValueError(f"mask {name} = {(a, b)} leaves [0, {L}]")
        for p in list(self.physics.f0) + list(self.physics.f1) + list(self.physics.u0.pulses):
            if not 0 <= p.center <= L:
                raise ValueError(f"pulse center {p.center} outside [0, {L}]")
        return self

    # resolved objects ---------------------------------------------------------
    def build_grid(self) -> Grid:
        return self.grid.build()

    def build_masks(self, grid: Grid, need_overlap: bool = False) -> Tuple[Mask, Mask]:
        omega = indicator_mask(grid, *self.masks.omega)
        obs = indicator_mask(grid, *self.masks.obs)
        if need_overlap:
            require_overlap(omega, obs)
        return omega, obs

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        return self if seed is None else self.model_copy(update={"seed": int(seed)})

    def with_output(self, out: Optional[str]) -> "RunConfig":
        return self if out is None else self.model_copy(update={"output": str(out)})

    def resolved(self) -> dict:
        """Plain-data view of every setting, for provenance headers."""
        return self.model_dump(mode="json")


def load_config(path) -> RunConfig:
    """Read and validate a YAML configuration; errors become ConfigurationError."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from exc
    return parse_config(data)


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping at top level")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid configuration:\n{exc}") from exc


def initial_field(cfg: RunConfig, grid: Grid) -> np.ndarray:
    u0 = pulse_field(grid, [Pulse(**p.model_dump()) for p in cfg.physics.u0.pulses])
    if cfg.physics.u0.random_norm > 0:
        rng = np.random.default_rng([cfg.seed, 0])
        u0 = u0 + cfg.physics.u0.random_norm * random_unit_field(grid, rng)
    return u0


def sources(cfg: RunConfig, grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    f0 = pulse_source(grid, [Pulse(**p.model_dump()) for p in cfg.physics.f0])
    f1 = pulse_source(grid, [Pulse(**p.model_dump()) for p in cfg.physics.f1])
    return f0, f1
