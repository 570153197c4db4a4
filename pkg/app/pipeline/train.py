"""Learn class prompts on one support episode and write the embedding store."""

import logging
from pathlib import Path

import numpy as np

from app.config import RunConfig, echo_config
from app.pipeline.context import load_backbone, load_dataset, support_episode, template_for
from app.utils.file_formats import save_embeddings
from ml.training.prompt_learning import (
    aligned_gcpl_config,
    mean_pairwise_cosine_distance,
    train_comple,
    train_gcpl_all,
)

LOGGER = logging.getLogger(__name__)


def main(cfg: RunConfig, method: str, aligned: bool = False) -> Path:
    """Train with `method` ("gcpl" | "comple").

    `aligned` swaps the GCPL settings for the ones that reproduce a λ=0 CoMPLe
    run with the same [comple] section.
    """
    schedule = cfg.schedule.build()
    dataset = load_dataset(cfg)
    model = load_backbone(cfg, dataset, schedule)
    episode = support_episode(cfg, dataset)
    template = template_for(cfg)

    LOGGER.info(f"🎯 Training {method} prompts: {episode.n_way}-way {episode.k_shot}-shot (seed {cfg.seed})")
    if method == "gcpl":
        gcpl_cfg = aligned_gcpl_config(cfg.comple, episode.n_way) if aligned else cfg.gcpl
        prompts = train_gcpl_all(
            episode.support, gcpl_cfg, model, schedule,
            class_names=episode.class_names, template=template, workers=cfg.harness.workers,
        )
    elif method == "comple":
        prompts = train_comple(
            episode.support, cfg.comple, model, schedule,
            class_names=episode.class_names, template=template,
        )
    else:
        raise ValueError(f"Unknown training method '{method}'")

    path = save_embeddings([p.name for p in prompts], np.stack([p.vector for p in prompts]), cfg.paths.embeddings)
    echo_config(cfg, cfg.paths.output_dir)
    LOGGER.info(f"📐 Mean pairwise cosine distance between prompts: {mean_pairwise_cosine_distance(prompts):.4f}")
    LOGGER.info(f"✅ Saved {len(prompts)} class prompts → {path}")
    return path
