"""Shared loading steps for the pipeline commands."""

import logging
from pathlib import Path

from app.config import RunConfig
from app.utils.errors import ConfigError, StorageError
from app.utils.file_formats import load_model
from ml.core.codec import IdentityCodec
from ml.core.denoiser import DenoiserModel
from ml.core.diffusion import NoiseSchedule
from ml.utils.episodes import Episode, build_episode
from ml.utils.latent_folder import load_latent_folder
from ml.utils.synthetic import LabeledDataset, generate_synthetic
from ml.utils.templates import PromptTemplate, resolve_template

__all__ = ["LATENT_CODEC", "load_dataset", "load_backbone", "support_episode", "template_for"]

LOGGER = logging.getLogger(__name__)

# Latents are stored already encoded; a real autoencoder would replace this.
LATENT_CODEC = IdentityCodec()


def load_dataset(cfg: RunConfig) -> LabeledDataset:
    if cfg.harness.latent_root:
        return load_latent_folder(cfg.harness.latent_root)
    return generate_synthetic(cfg.harness.synthetic_spec())


def load_backbone(cfg: RunConfig, dataset: LabeledDataset, schedule: NoiseSchedule) -> DenoiserModel:
    """Frozen backbone from `paths.backbone`, checked against the dataset and schedule."""
    path = Path(cfg.paths.backbone)
    if not path.exists():
        raise StorageError(f"Backbone not found at {path}; run `pretrain` first")
    model = load_model(path)
    if not model.frozen:
        raise ConfigError(f"Backbone {path} is not frozen")
    arch = model.arch
    if arch.latent_dim != dataset.latent_dim:
        raise ConfigError(f"Backbone latent_dim {arch.latent_dim} != dataset latent_dim {dataset.latent_dim}")
    if arch.n_classes != dataset.n_classes:
        raise ConfigError(f"Backbone was pretrained on {arch.n_classes} classes, dataset has {dataset.n_classes}")
    if arch.num_timesteps != schedule.T:
        raise ConfigError(f"Backbone expects T={arch.num_timesteps}, schedule has T={schedule.T}")
    LOGGER.info(f"📦 Loaded backbone {path} ({arch.n_classes} classes, latent_dim {arch.latent_dim})")
    return model


def support_episode(cfg: RunConfig, dataset: LabeledDataset) -> Episode:
    return build_episode(dataset, cfg.harness.n_way, cfg.harness.k_shot, cfg.seed)


def template_for(cfg: RunConfig) -> PromptTemplate:
    return resolve_template(cfg.harness.template_dataset)
