"""
Run configuration: one TOML or JSON file, validated with pydantic, plus CLI overrides.
"""
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Literal, Optional

from django.conf import settings
from pydantic import BaseModel, ConfigDict, Field, FilePath, ValidationError, model_validator

from apps.core.exceptions import ConfigError
from apps.engine.trainer import TrainConfig
from apps.planner.budget import SearchBudget
from apps.planner.targets import TargetSpec

logger = logging.getLogger(__name__)


class ModelConfig(BaseModel):
    """A manifest to load, or the builder used when no manifest is given."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    manifest: Optional[FilePath] = None
    builder: Literal['mlp', 'lenet'] = 'mlp'
    hidden: tuple[int, ...] = (64, 32)


class SyntheticConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    n: int = Field(default=2000, gt=0)
    d: int = Field(default=16, gt=0)
    classes: int = Field(default=4, ge=2)
    separation: float = Field(default=3.0, ge=0)


class DatasetConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    images: Optional[FilePath] = None
    labels: Optional[FilePath] = None
    num_classes: int = Field(default=0, ge=0)
    synthetic: Optional[SyntheticConfig] = None
    eval_fraction: float = Field(default=0.2, gt=0, lt=1)
    calibration_size: int = Field(default=256, gt=0)

    @model_validator(mode='after')
    def _one_source(self):
        has_idx = self.images is not None or self.labels is not None
        if has_idx and (self.images is None or self.labels is None):
            raise ValueError("images and labels must be given together")
        if has_idx == (self.synthetic is not None):
            raise ValueError("give either images/labels or a synthetic section")
        return self


class HardwareConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    cost_table: Optional[FilePath] = None


class RunConfig(BaseModel):
    """Everything one run needs; `seed` is mandatory."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    seed: int
    output_dir: Path = Field(default_factory=lambda: Path(settings.SIGMAQUANT_OUTPUT_DIR))
    model: ModelConfig = ModelConfig()
    dataset: DatasetConfig
    targets: TargetSpec = TargetSpec()
    budget: SearchBudget = SearchBudget()
    training: TrainConfig = TrainConfig()
    hardware: HardwareConfig = HardwareConfig()


# CLI option -> dotted config path
OVERRIDE_PATHS = {
    'seed': 'seed',
    'out': 'output_dir',
    'target_acc': 'targets.accuracy',
    'target_size': 'targets.size_bytes',
    'target_bops': 'targets.bops',
    'delta_a': 'targets.delta_a',
    'delta_m': 'targets.delta_m',
    'imax': 'budget.phase1_rounds',
}


def read_config_file(path) -> dict:
    """TOML or JSON by suffix; unknown suffixes are tried as JSON, then TOML."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError('config', f"file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix == '.toml':
            return tomllib.loads(text)
        if path.suffix == '.json':
            return json.loads(text)
        stripped = text.lstrip()
        return json.loads(text) if stripped.startswith('{') else tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError('config', f"cannot parse {path}: {e}") from e


def _resolve_paths(data: dict, base: Path):
    """Relative file paths in the config are taken relative to the config file."""
    for section, keys in (('model', ('manifest',)), ('dataset', ('images', 'labels')), ('hardware', ('cost_table',))):
        block = data.get(section)
        if not isinstance(block, dict):
            continue
        for key in keys:
            if isinstance(block.get(key), str) and not Path(block[key]).is_absolute():
                block[key] = str(base / block[key])


def apply_overrides(data: dict, overrides: dict[str, Any]) -> dict:
    data = {key: dict(value) if isinstance(value, dict) else value for key, value in data.items()}
    for option, value in overrides.items():
        if value is None or option not in OVERRIDE_PATHS:
            continue
        section, _, key = OVERRIDE_PATHS[option].rpartition('.')
        target = data.setdefault(section, {}) if section else data
        target[key] = value
    if overrides.get('target_bops') is not None:
        data.setdefault('targets', {})['metric'] = 'bops'
    elif overrides.get('target_size') is not None:
        data.setdefault('targets', {})['metric'] = 'size'
    return data


def validate_run_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = '.'.join(str(part) for part in first['loc'])
        raise ConfigError(field, first['msg']) from e


def load_run_config(path, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """
    Load, override and validate a run configuration.

    Raises ConfigError naming the dotted field path of the first invalid value.
    """
    data = read_config_file(path)
    _resolve_paths(data, Path(path).resolve().parent)
    config = validate_run_config(apply_overrides(data, overrides or {}))
    logger.debug(
        "Loaded run configuration",
        extra={'extra_data': {'path': str(path), 'seed': config.seed, 'output_dir': str(config.output_dir)}},
    )
    return config
