import os
from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from src.registration.register import RegistrationSettings
from src.utility.errors import ConfigError
from src.utility.utility import load_config

CONFIG_PATH = os.path.join(os.path.dirname(__file__), 'config.yaml')
SEED_ENV = 'ATLASCUT_SEED'


class RegistrationConfig(BaseModel):
    translation_step: float = Field(default=2.0, gt=0)
    linear_step: float = Field(default=0.05, gt=0)
    parameterization: str = 'affine'
    pyramid: Tuple[int, ...] = (2, 1)
    f_tol: float = Field(default=1e-8, gt=0)
    max_iterations: int = Field(default=2000, ge=1)

    @field_validator('parameterization')
    @classmethod
    def _known(cls, value: str) -> str:
        if value not in ('affine', 'similarity'):
            raise ValueError(f"parameterization must be 'affine' or 'similarity', got '{value}'")
        return value

    def settings(self) -> RegistrationSettings:
        return RegistrationSettings(**self.model_dump())


class RegistrationConfigs(BaseModel):
    volume: RegistrationConfig = RegistrationConfig(f_tol=1e-3)
    refinement: RegistrationConfig = RegistrationConfig(f_tol=1e-5)


def check_increasing_weights(weights: Tuple[float, float, float]) -> bool:
    """True when w1 <= w2 <= w3 (intensity, prior, distance in increasing influence)."""
    return weights[0] <= weights[1] <= weights[2]


class PipelineConfig(BaseModel):
    """Every empirical constant of the segmentation, validated on load."""
    slice_range: Optional[Tuple[int, int]] = None
    erosion_fraction: float = Field(default=0.15, gt=0, lt=1)
    prior_threshold: float = Field(default=0.5, gt=0, lt=1)
    low_threshold: float = Field(default=0.1, gt=0, lt=1)
    max_iterations: int = Field(default=10, ge=1)
    convergence_tol: float = Field(default=0.01, gt=0)
    lock_erosion: int = Field(default=2, ge=0)
    inter_slice_lock: bool = True
    distance_cap: float = Field(default=10, gt=0)
    myo_weights: Tuple[float, float, float] = (0.2, 0.3, 0.5)
    bp_bg_components: int = Field(default=2, ge=1)
    myo_bg_components: int = Field(default=3, ge=1)
    seed: int = 0
    detect_roi: bool = True
    ed_frame: int = Field(default=0, ge=0)
    jobs: int = Field(default=1, ge=1)
    # accept non-increasing myo_weights (weight ablations only)
    weight_ablation: bool = False
    registration: RegistrationConfigs = RegistrationConfigs()

    @field_validator('slice_range')
    @classmethod
    def _ordered(cls, value: Optional[Tuple[int, int]]) -> Optional[Tuple[int, int]]:
        if value is not None:
            start, end = value
            if start < 0 or start > end:
                raise ValueError(f"slice_range needs 0 <= z_start <= z_end, got {value}")
        return value

    @field_validator('myo_weights')
    @classmethod
    def _weights(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(w < 0 for w in value) or abs(sum(value) - 1.0) > 1e-9:
            raise ValueError(f"myo_weights must be non-negative and sum to 1, got {value}")
        return value

    @model_validator(mode='after')
    def _thresholds(self) -> 'PipelineConfig':
        if self.low_threshold >= self.prior_threshold:
            raise ValueError('low_threshold must be below prior_threshold')
        if not self.weight_ablation and not check_increasing_weights(self.myo_weights):
            raise ValueError(f'myo_weights must increase (w1 <= w2 <= w3), got {self.myo_weights}')
        return self

    def require_slice_range(self) -> Tuple[int, int]:
        if self.slice_range is None:
            raise ConfigError(
                "slice_range is required: the start and end slices of the LV are the pipeline's manual input",
                key='slice_range',
            )
        return self.slice_range


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def env_seed() -> Optional[int]:
    """The ATLASCUT_SEED override, or None when unset."""
    value = os.environ.get(SEED_ENV)
    if not value:
        return None
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got '{value}'", key='seed')


def load_pipeline_config(
    path: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> PipelineConfig:
    """
    Builds the pipeline configuration from package defaults, an optional YAML/JSON
    file and explicit overrides, in that order. ATLASCUT_SEED overrides the seed.

    Args:
        path (str, optional): Config file to merge over the defaults.
        overrides (Dict[str, Any], optional): Values taking precedence over the file.

    Returns:
        PipelineConfig: The validated configuration.

    Raises:
        ConfigError: Unreadable file or invalid values.
    """
    defaults = load_config(CONFIG_PATH)
    if defaults is None:
        raise ConfigError(f"default configuration missing: {CONFIG_PATH}")
    data = defaults
    if path is not None:
        user = load_config(path)
        if user is None:
            raise ConfigError(f"cannot read configuration file '{path}'")
        data = _merge(data, user)
    if overrides:
        data = _merge(data, {k: v for k, v in overrides.items() if v is not None})
    seed = env_seed()
    if seed is not None:
        data['seed'] = seed

    try:
        cfg = PipelineConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"invalid pipeline configuration: {e}")
    return cfg
