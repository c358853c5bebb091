"""YAML run configuration, validated strictly: unknown keys are rejected."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .dsp import FilterSpec, RansacSpec
from .errors import ConfigError
from .harness import PRESETS, TrajectorySpec
from .ident import IdentSpec
from .mapping import DEFAULT_SLOPE_NOISE, MlpConfig
from .plant import (
    ACT_BETA_P,
    ACT_BETA_R,
    TABLE_MEAN_ACT,
    HysteresisParams,
    PlantGeometry,
    params_from_geometry,
)

OUTPUT_DIR_ENV = "SSTL_OUTPUT_DIR"


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PlantBlock(_Block):
    """Either explicit slopes/biases or a friction product ``mu_phi``."""

    gamma_p: Optional[float] = Field(None, gt=0, le=1)
    beta_p: Optional[float] = None
    gamma_r: Optional[float] = Field(None, ge=1)
    beta_r: Optional[float] = None
    mu_phi: Optional[float] = Field(None, ge=0)
    n_pass: Literal[1, 2] = 1

    @model_validator(mode="after")
    def _complete(self):
        slopes = (self.gamma_p, self.gamma_r)
        if self.mu_phi is not None and any(s is not None for s in slopes):
            raise ValueError("give either mu_phi or gamma_p/gamma_r, not both")
        if self.mu_phi is None and (slopes[0] is None) != (slopes[1] is None):
            raise ValueError("gamma_p and gamma_r must be given together")
        return self

    def to_params(self) -> HysteresisParams:
        bp = ACT_BETA_P if self.beta_p is None else self.beta_p
        br = ACT_BETA_R if self.beta_r is None else self.beta_r
        if self.mu_phi is not None:
            return params_from_geometry(PlantGeometry.from_mu_phi(self.mu_phi, self.n_pass), bp, br)
        if self.gamma_p is None:
            gp, _, gr, _ = TABLE_MEAN_ACT
        else:
            gp, gr = self.gamma_p, self.gamma_r
        return HysteresisParams(gp, bp, gr, br)


class RansacBlock(_Block):
    inlier_threshold: float = Field(0.15, gt=0)
    iterations: int = Field(500, ge=1)
    min_inliers_fraction: float = Field(0.5, gt=0, le=1)
    seed: int = Field(0, ge=0)


class IdentBlock(_Block):
    filter: bool = True
    cutoff_hz: float = Field(5.0, gt=0)
    order: int = Field(2, ge=1)
    delta_bl: float = Field(0.3, gt=0)
    min_prominence: float = Field(1.0, gt=0)
    ransac: RansacBlock = RansacBlock()

    def to_spec(self) -> IdentSpec:
        return IdentSpec(
            filter=FilterSpec(self.cutoff_hz, self.order) if self.filter else None,
            delta_bl=self.delta_bl,
            ransac=RansacSpec(**self.ransac.model_dump()),
            min_prominence=self.min_prominence,
        )


class DatasetBlock(_Block):
    n_per_location: int = Field(50, ge=2)
    noise_pull: float = Field(DEFAULT_SLOPE_NOISE[0], ge=0)
    noise_release: float = Field(DEFAULT_SLOPE_NOISE[1], ge=0)
    seed: int = Field(0, ge=0)


class MappingBlock(_Block):
    kind: Literal["mlp", "linear"] = "mlp"
    embed_dim: int = Field(128, ge=1)
    n_blocks: int = Field(2, ge=1)
    skip_alpha: Literal[0, 1] = 1
    lambda_inv: float = Field(2e-3, ge=0)
    lr: float = Field(1e-3, gt=0)
    weight_decay: float = Field(1e-4, ge=0)
    epochs: int = Field(MlpConfig.epochs, ge=1)
    batch_size: Optional[int] = Field(None, ge=1)
    val_fraction: float = Field(0.0, ge=0, lt=1)
    patience: int = Field(200, ge=1)
    model_path: Optional[str] = None
    dataset: DatasetBlock = DatasetBlock()

    def to_mlp_config(self, init_seed: int = 0) -> MlpConfig:
        d = self.model_dump(exclude={"kind", "model_path", "dataset"})
        return MlpConfig(**d, init_seed=init_seed)


class TrajectoryBlock(_Block):
    kind: Literal["trapezoid", "sinusoid", "multisine"]
    duration: float = Field(gt=0)
    sample_rate: float = Field(500.0, gt=0)
    low: float = Field(5.0, ge=0)
    high: float = Field(25.0, gt=0)
    rise: float = Field(3.0, gt=0)
    hold: float = Field(1.0, ge=0)
    fall: float = Field(8.0, gt=0)
    freq: float = Field(0.01, gt=0)
    amplitude: float = 5.0
    offset: float = 10.0
    n_components: int = Field(6, ge=1)
    freq_range: tuple[float, float] = (0.02, 0.15)
    amp_range: tuple[float, float] = (5.0, 30.0)
    bounds: tuple[float, float] = (1.0, 30.0)
    seed: int = Field(0, ge=0)

    def to_spec(self) -> TrajectorySpec:
        return TrajectorySpec(**self.model_dump())


TrajectoryField = Union[str, TrajectoryBlock]


class RunConfig(_Block):
    plant: PlantBlock = PlantBlock()
    sstl: Optional[PlantBlock] = None
    ident: IdentBlock = IdentBlock()
    mapping: MappingBlock = MappingBlock()
    trajectory: TrajectoryField = "sinusoid"
    probe: TrajectoryField = "probe_act"
    scheme: Literal["no_comp", "no_bias", "proposed", "direct_ident"] = "proposed"
    noise: float = Field(0.05, ge=0)
    lag_tau: float = Field(0.0, ge=0)
    seed: int = Field(0, ge=0)
    output_dir: str = "out"

    @field_validator("trajectory", "probe")
    @classmethod
    def _preset_known(cls, v):
        if isinstance(v, str) and v not in PRESETS:
            raise ValueError(f"unknown preset {v!r}; known: {', '.join(PRESETS)}")
        return v


def trajectory_spec(value: TrajectoryField) -> TrajectorySpec | str:
    return value if isinstance(value, str) else value.to_spec()


def _format(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        parts = list(err["loc"])
        # Union members show up as extra path components; a mapping that
        # failed the preset-name branch is reported through the block branch.
        if "str" in parts and isinstance(err.get("input"), dict):
            continue
        parts = [p for p in parts if p not in ("str", "TrajectoryBlock")]
        loc = ".".join(str(p) for p in parts) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def config_from_dict(data: dict | None) -> RunConfig:
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as exc:
        raise ConfigError(_format(exc)) from None


def parse_config(path: str | Path) -> RunConfig:
    """Load and validate a YAML run configuration."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: malformed YAML: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return config_from_dict(data)

