"""Run configuration: sectioned TOML (or the echoed JSON), validated by pydantic.

Precedence for the global seed: --seed on the command line, then GCPL_SEED,
then the file. Section seeds left unset resolve to the global seed.
"""

import json
import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.env import GCPL_WORKERS, seed_override
from app.utils.errors import ConfigError, StorageError
from app.utils.paths import resolved_config_path
from ml.core.diffusion import NoiseSchedule, make_schedule
from ml.evaluation.benchmark import METHODS
from ml.inference.classifier import ClassifierConfig
from ml.training.pretrain import BackboneConfig
from ml.training.prompt_learning import CoMPLeConfig, GCPLConfig
from ml.utils.synthetic import SyntheticSpec
from ml.utils.templates import TEMPLATES

__all__ = [
    "ScheduleConfig",
    "HarnessConfig",
    "PathsConfig",
    "RunConfig",
    "load_config",
    "echo_config",
]

LOGGER = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScheduleConfig(_Section):
    schedule: Literal["linear"] = "linear"
    T: int = Field(1000, ge=1)
    beta_start: float = Field(1e-4, gt=0, lt=1)
    beta_end: float = Field(0.02, gt=0, lt=1)

    def build(self) -> NoiseSchedule:
        try:
            return make_schedule(self.schedule, self.T, self.beta_start, self.beta_end)
        except ValueError as exc:
            raise ConfigError(f"[schedule] {exc}") from exc


class HarnessConfig(_Section):
    spec_name: str = "reference"
    n_classes: int = Field(4, ge=2)
    latent_dim: int = Field(16, ge=1)
    prototype_scale: float = Field(1.0, gt=0)
    sigma_class: float = Field(0.3, gt=0)
    train_per_class: int = Field(64, ge=1)
    test_per_class: int = Field(50, ge=1)
    data_seed: int = Field(0, ge=0)
    shots: list[int] = Field(default_factory=lambda: [1, 4, 8, 16], min_length=1)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    k_shot: int = Field(16, ge=1)
    n_way: int | None = Field(None, ge=1)
    methods: list[str] = Field(default_factory=lambda: ["gcpl", "comple"], min_length=1)
    template_dataset: str = "CRC5k"
    latent_root: str | None = None
    workers: int = Field(default_factory=lambda: GCPL_WORKERS, ge=1)
    record_wall_clock: bool = False

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, methods: list[str]) -> list[str]:
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; known: {list(METHODS)}")
        return methods

    @field_validator("template_dataset")
    @classmethod
    def _known_template(cls, name: str) -> str:
        if name not in TEMPLATES:
            raise ValueError(f"unknown template dataset '{name}'; known: {sorted(TEMPLATES)}")
        return name

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            n_classes=self.n_classes,
            latent_dim=self.latent_dim,
            prototype_scale=self.prototype_scale,
            sigma_class=self.sigma_class,
            train_per_class=self.train_per_class,
            test_per_class=self.test_per_class,
            seed=self.data_seed,
        )


class PathsConfig(_Section):
    backbone: str = "artifacts/backbone.gcpl"
    embeddings: str = "artifacts/prompts.gcplemb"
    output_dir: str = "runs/latest"


class RunConfig(_Section):
    seed: int = Field(0, ge=0)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    gcpl: GCPLConfig = Field(default_factory=GCPLConfig)
    comple: CoMPLeConfig = Field(default_factory=CoMPLeConfig)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)
    harness: HarnessConfig = Field(default_factory=HarnessConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    def resolved(self) -> "RunConfig":
        """Copy with every unset section seed replaced by the global seed."""
        update = {}
        for name in ("backbone", "gcpl", "comple", "classifier"):
            section = getattr(self, name)
            if section.seed is None:
                update[name] = section.model_copy(update={"seed": self.seed})
        return self.model_copy(update=update)

    def to_json_dict(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)


def _read_file(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise StorageError(f"Config file not found: {path}") from None
    except OSError as exc:
        raise StorageError(f"Cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot parse {path}: {exc}") from exc


def load_config(path=None, seed: int | None = None) -> RunConfig:
    """Validate a config file (or the defaults), apply seed overrides, resolve section seeds."""
    data = _read_file(Path(path)) if path else {}
    try:
        env_seed = seed_override()
    except ValueError as exc:
        raise ConfigError(f"GCPL_SEED must be an integer: {exc}") from exc
    if env_seed is not None:
        data["seed"] = env_seed
    if seed is not None:
        data["seed"] = seed
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid config{f' {path}' if path else ''}:\n{exc}") from exc
    return cfg.resolved()


def echo_config(cfg: RunConfig, out_dir) -> Path:
    path = resolved_config_path(out_dir)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(cfg.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"Cannot write {path}: {exc}") from exc
    return path
