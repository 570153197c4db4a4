#!/usr/bin/env python3
"""Build the seed-pinned backbone fixtures for the shipped configs.

Usage:
    python scripts/make_fixture.py                 # reference + hard
    python scripts/make_fixture.py configs/hard.toml
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import pandas as pd  # noqa: E402

from app.config import load_config  # noqa: E402
from app.utils.file_formats import save_model  # noqa: E402
from app.utils.logging import get_logger, setup_logging  # noqa: E402
from app.utils.paths import pretrain_history_path  # noqa: E402
from ml.training.pretrain import build_backbone_fixture  # noqa: E402

logger = get_logger()

DEFAULT_CONFIGS = ["configs/reference.toml", "configs/hard.toml"]


def main(config_paths: list[str]) -> None:
    for config_path in config_paths:
        cfg = load_config(config_path)
        logger.info(f"🧪 Building fixture for {config_path}")
        fixture = build_backbone_fixture(
            cfg.harness.synthetic_spec(), cfg.schedule.build(), cfg.backbone, seed=cfg.backbone.seed
        )
        save_model(fixture.model, cfg.paths.backbone)
        history = pd.DataFrame(fixture.model.history, columns=["step", "loss"])
        history_path = pretrain_history_path(cfg.paths.output_dir)
        history_path.parent.mkdir(parents=True, exist_ok=True)
        history.to_csv(history_path, index=False)
        if len(history):
            logger.info(f"   loss {history['loss'].iloc[0]:.5f} → {history['loss'].iloc[-1]:.5f}")
        logger.info(f"✅ Saved backbone → {cfg.paths.backbone}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Build backbone fixtures")
    parser.add_argument("configs", nargs="*", default=DEFAULT_CONFIGS, help="Run configs to build")
    args = parser.parse_args()
    setup_logging()
    main(args.configs)
