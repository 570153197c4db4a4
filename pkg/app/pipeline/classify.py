"""Classify query latents against a stored set of class prompts."""

import logging
from pathlib import Path

import numpy as np
from sklearn.metrics import accuracy_score, confusion_matrix

from app.config import RunConfig, echo_config
from app.pipeline.context import LATENT_CODEC, load_backbone, load_dataset, support_episode
from app.utils.errors import ConfigError
from app.utils.file_formats import load_embeddings
from app.utils.paths import predictions_path
from ml.inference.classifier import classify_many, write_reports_jsonl
from ml.utils.latent_folder import load_queries

LOGGER = logging.getLogger(__name__)


def main(cfg: RunConfig, queries: str | None = None) -> Path:
    """Queries come from `queries` (a .lat file or folder) or, by default, the episode's held-out split."""
    schedule = cfg.schedule.build()
    dataset = load_dataset(cfg)
    model = load_backbone(cfg, dataset, schedule)
    names, vectors = load_embeddings(cfg.paths.embeddings)
    if len(names) == 0:
        raise ConfigError(f"Embedding store {cfg.paths.embeddings} holds no classes")
    if vectors.shape[1] != model.cond_dim:
        raise ConfigError(f"Stored prompts have length {vectors.shape[1]}, backbone expects {model.cond_dim}")

    if queries is not None:
        x, y = load_queries(queries, names)
        x = LATENT_CODEC.encode(x)
    else:
        episode = support_episode(cfg, dataset)
        if list(episode.class_names) != names:
            raise ConfigError(
                f"Embedding store classes {names} do not match the episode classes {list(episode.class_names)}"
            )
        x, y = episode.queries_x, episode.queries_y

    LOGGER.info(f"🔎 Classifying {len(x)} queries over {len(names)} classes (N={cfg.classifier.n_mc})")
    reports = classify_many(x, vectors, cfg.classifier, model, schedule,
                            workers=cfg.harness.workers, class_names=names)
    out_dir = Path(cfg.paths.output_dir)
    path = write_reports_jsonl(reports, predictions_path(out_dir), y)
    echo_config(cfg, out_dir)

    if y is not None and len(y):
        predicted = np.asarray([r.predicted for r in reports])
        LOGGER.info(f"🎯 Accuracy {accuracy_score(y, predicted):.4f}")
        LOGGER.debug(f"Confusion matrix:\n{confusion_matrix(y, predicted, labels=list(range(len(names))))}")
    LOGGER.info(f"✅ Wrote predictions → {path}")
    return path
