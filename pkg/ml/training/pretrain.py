"""Backbone pretraining: the frozen conditional denoiser every other stage builds on.

The denoiser learns ε from (x_t, t, true class condition) with the standard
denoising MSE, then is frozen. Anchor conditions travel with the model.
"""

import logging
from dataclasses import dataclass

import numpy as np
from pydantic import Field

from app.utils.errors import DataError, DivergenceError
from ml.core.denoiser import DenoiserArchitecture, DenoiserModel
from ml.core.diffusion import NoiseSchedule, add_noise, sample_pair_batch
from ml.core.numerics import DTYPE, mse
from ml.core.rng import Stream, derive_rng
from ml.training.optim import OptimizerConfig, OptimizerState, step
from ml.utils.synthetic import LabeledDataset, SyntheticSpec, generate_synthetic

__all__ = [
    "BackboneConfig",
    "BackboneFixture",
    "make_anchor_conditions",
    "pretrain_backbone",
    "build_backbone_fixture",
]

LOGGER = logging.getLogger(__name__)


class BackboneConfig(OptimizerConfig):
    lr: float = Field(1e-3, ge=0)
    time_embed_dim: int = Field(16, ge=4)
    cond_dim: int = Field(16, ge=1)
    hidden_dim: int = Field(128, ge=1)
    n_hidden_layers: int = Field(2, ge=2, le=2)
    steps: int = Field(5000, ge=0)
    batch_size: int = Field(32, ge=1)
    anchor_scale: float = Field(1.0, gt=0)
    log_every: int = Field(100, ge=1)
    seed: int | None = None


@dataclass(frozen=True)
class BackboneFixture:
    dataset: LabeledDataset
    anchors: np.ndarray
    model: DenoiserModel


def make_anchor_conditions(n_classes: int, cond_dim: int, scale: float, seed: int) -> np.ndarray:
    """True per-class conditions, N(0, scale²)."""
    rng = derive_rng(seed, Stream.ANCHORS)
    return (rng.standard_normal((n_classes, cond_dim)) * scale).astype(DTYPE)


def pretrain_backbone(
    dataset: LabeledDataset,
    true_conditions: np.ndarray,
    schedule: NoiseSchedule,
    cfg: BackboneConfig,
    seed: int = 0,
) -> DenoiserModel:
    """Train ε_θ on (x_t, t, condition of x0's class) and return it frozen.

    Every `log_every` steps the window-mean loss is appended to `model.history`
    as {"step", "loss"}.
    """
    if len(dataset.train_x) == 0:
        raise DataError("Cannot pretrain on an empty dataset")
    true_conditions = np.asarray(true_conditions, dtype=DTYPE)
    if true_conditions.ndim != 2 or true_conditions.shape[0] != dataset.n_classes:
        raise DataError(
            f"Need one true condition per class ({dataset.n_classes}), got shape {true_conditions.shape}"
        )

    arch = DenoiserArchitecture(
        latent_dim=dataset.latent_dim,
        time_embed_dim=cfg.time_embed_dim,
        cond_dim=true_conditions.shape[1],
        hidden_dim=cfg.hidden_dim,
        n_hidden_layers=cfg.n_hidden_layers,
        num_timesteps=schedule.T,
        n_classes=dataset.n_classes,
    )
    model = DenoiserModel.initialize(arch, derive_rng(seed, Stream.BACKBONE_INIT), anchors=true_conditions)
    rng = derive_rng(seed, Stream.BACKBONE_STEPS)
    state = OptimizerState.from_config(cfg)

    n = len(dataset.train_x)
    coef = 2.0 / (cfg.batch_size * arch.latent_dim)
    window = []
    LOGGER.info(f"Pretraining backbone: {cfg.steps} steps, batch {cfg.batch_size}, {arch.n_classes} classes")
    for k in range(1, cfg.steps + 1):
        idx = rng.integers(0, n, size=cfg.batch_size)
        x0 = dataset.train_x[idx]
        cond = model.anchors[dataset.train_y[idx]]
        pairs = sample_pair_batch(cfg.batch_size, schedule.T, arch.latent_dim, rng)
        xt = add_noise(x0, pairs.eps, pairs.ts, schedule).xt

        try:
            pred = model.predict_noise(xt, pairs.ts, cond)
            loss = mse(pred, pairs.eps)
            upstream = (pred - pairs.eps) * coef
            grads = model.backward(xt, pairs.ts, cond, upstream, with_params=True)
            grads.pop("c")
            params, state = step(state, model.params, grads)
        except DivergenceError as exc:
            if exc.step is not None:
                raise
            raise DivergenceError(f"Pretraining diverged: {exc}", step=k) from exc
        model.update_params(params)

        window.append(loss)
        if k % cfg.log_every == 0:
            mean_loss = float(np.mean(window))
            model.history.append({"step": k, "loss": mean_loss})
            LOGGER.info(f"pretrain step {k:5d}  loss {mean_loss:.5f}")
            window = []

    return model.freeze()


def build_backbone_fixture(
    spec: SyntheticSpec,
    schedule: NoiseSchedule,
    cfg: BackboneConfig,
    seed: int | None = None,
) -> BackboneFixture:
    """Dataset, anchor conditions and frozen backbone from one seed."""
    seed = spec.seed if seed is None else seed
    dataset = generate_synthetic(spec)
    anchors = make_anchor_conditions(spec.n_classes, cfg.cond_dim, cfg.anchor_scale, seed)
    model = pretrain_backbone(dataset, anchors, schedule, cfg, seed=seed)
    return BackboneFixture(dataset=dataset, anchors=anchors, model=model)
