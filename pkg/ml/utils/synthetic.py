"""Labelled latent datasets and the synthetic prototype-plus-noise generator."""

import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.utils.errors import DataError, ShapeError
from ml.core.numerics import DTYPE
from ml.core.rng import Stream, derive_rng

__all__ = [
    "SyntheticSpec",
    "LabeledDataset",
    "REFERENCE_SPEC",
    "HARD_SPEC",
    "generate_synthetic",
]

LOGGER = logging.getLogger(__name__)


class SyntheticSpec(BaseModel):
    """C Gaussian clusters around prototypes drawn once from the seed."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_classes: int = Field(4, ge=2)
    latent_dim: int = Field(16, ge=1)
    prototype_scale: float = Field(1.0, gt=0)
    sigma_class: float = Field(0.3, gt=0)
    train_per_class: int = Field(64, ge=1)
    test_per_class: int = Field(50, ge=1)
    seed: int = Field(0, ge=0)


REFERENCE_SPEC = SyntheticSpec()
HARD_SPEC = SyntheticSpec(n_classes=8, sigma_class=0.5)


@dataclass(frozen=True)
class LabeledDataset:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    class_names: tuple[str, ...]
    prototypes: np.ndarray | None = None

    def __post_init__(self):
        if self.train_x.ndim != 2 or self.test_x.ndim != 2:
            raise ShapeError("Latent splits must be 2-D [samples × latent_dim]")
        if self.train_x.shape[1] != self.test_x.shape[1]:
            raise ShapeError("Train and test latents differ in dimension")
        if len(self.train_x) != len(self.train_y) or len(self.test_x) != len(self.test_y):
            raise ShapeError("Each latent needs exactly one label")
        if len(self.train_x) == 0:
            raise DataError("Dataset has no training samples")
        for labels in (self.train_y, self.test_y):
            if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
                raise DataError("Label outside the class-name table")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def latent_dim(self) -> int:
        return self.train_x.shape[1]

    def class_train(self, c: int) -> np.ndarray:
        return self.train_x[self.train_y == c]

    def class_test(self, c: int) -> np.ndarray:
        return self.test_x[self.test_y == c]


def _split(prototypes: np.ndarray, per_class: int, sigma: float, rng: np.random.Generator):
    n_classes, dim = prototypes.shape
    noise = rng.standard_normal((n_classes, per_class, dim))
    x = (prototypes[:, None, :] + sigma * noise).reshape(-1, dim).astype(DTYPE)
    y = np.repeat(np.arange(n_classes), per_class)
    return x, y


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Prototypes ~ N(0, scale²), samples = prototype + N(0, σ_class²).

    Draw order is fixed: prototypes, then the train block, then the test block.
    """
    rng = derive_rng(spec.seed, Stream.DATA)
    prototypes = rng.standard_normal((spec.n_classes, spec.latent_dim)) * spec.prototype_scale
    train_x, train_y = _split(prototypes, spec.train_per_class, spec.sigma_class, rng)
    test_x, test_y = _split(prototypes, spec.test_per_class, spec.sigma_class, rng)
    LOGGER.debug(f"Synthetic dataset: {spec.n_classes} classes, {len(train_x)} train / {len(test_x)} test latents")
    return LabeledDataset(
        train_x=train_x,
        train_y=train_y,
        test_x=test_x,
        test_y=test_y,
        class_names=tuple(f"class_{c}" for c in range(spec.n_classes)),
        prototypes=prototypes.astype(DTYPE),
    )
