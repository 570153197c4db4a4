"""Pretrain the conditional denoiser and save it frozen."""

import logging
from pathlib import Path

import pandas as pd

from app.config import RunConfig, echo_config
from app.pipeline.context import load_dataset
from app.utils.errors import StorageError
from app.utils.file_formats import save_model
from app.utils.paths import pretrain_history_path
from ml.training.pretrain import make_anchor_conditions, pretrain_backbone

LOGGER = logging.getLogger(__name__)


def main(cfg: RunConfig) -> Path:
    out_dir = Path(cfg.paths.output_dir)
    schedule = cfg.schedule.build()
    dataset = load_dataset(cfg)
    seed = cfg.backbone.seed
    anchors = make_anchor_conditions(dataset.n_classes, cfg.backbone.cond_dim, cfg.backbone.anchor_scale, seed)

    LOGGER.info(f"🧠 Pretraining backbone on {len(dataset.train_x)} latents ({dataset.n_classes} classes)")
    model = pretrain_backbone(dataset, anchors, schedule, cfg.backbone, seed=seed)
    path = save_model(model, cfg.paths.backbone)

    history = pd.DataFrame(model.history, columns=["step", "loss"])
    history_path = pretrain_history_path(out_dir)
    try:
        history_path.parent.mkdir(parents=True, exist_ok=True)
        history.to_csv(history_path, index=False)
    except OSError as exc:
        raise StorageError(f"Cannot write {history_path}: {exc}") from exc
    echo_config(cfg, out_dir)

    if len(history) >= 2:
        first, last = history["loss"].iloc[0], history["loss"].iloc[-1]
        LOGGER.info(f"✅ Loss {first:.5f} → {last:.5f} over {cfg.backbone.steps} steps")
    LOGGER.info(f"✅ Saved backbone → {path}")
    return path
