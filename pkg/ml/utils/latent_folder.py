"""Folder-of-latents ingestion: root/{train,test}/<label>/*.lat.

Mirrors an image-folder dataset layout, one GCPLLAT file per sample, labels
taken from directory names in sorted order.
"""

import logging
from pathlib import Path

import numpy as np

from app.utils.errors import DataError, StorageError
from app.utils.file_formats import load_latent, save_latent
from ml.utils.synthetic import LabeledDataset

__all__ = ["LATENT_SUFFIX", "load_latent_folder", "load_queries", "write_latent_folder"]

LOGGER = logging.getLogger(__name__)

LATENT_SUFFIX = ".lat"


def _label_dirs(split_dir: Path) -> list[Path]:
    return sorted(p for p in split_dir.iterdir() if p.is_dir())


def _read_split(split_dir: Path, class_names: list[str]) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for label_dir in _label_dirs(split_dir):
        if label_dir.name not in class_names:
            raise DataError(f"Label '{label_dir.name}' in {split_dir} is absent from the train split")
        label = class_names.index(label_dir.name)
        for f in sorted(label_dir.glob(f"*{LATENT_SUFFIX}")):
            xs.append(load_latent(f))
            ys.append(label)
    if not xs:
        return np.empty((0, 0), dtype=np.float32), np.empty(0, dtype=np.int64)
    dims = {len(x) for x in xs}
    if len(dims) != 1:
        raise DataError(f"Latents under {split_dir} have mixed dimensions {sorted(dims)}")
    return np.stack(xs), np.asarray(ys, dtype=np.int64)


def load_latent_folder(root) -> LabeledDataset:
    root = Path(root)
    train_dir, test_dir = root / "train", root / "test"
    if not train_dir.is_dir():
        raise StorageError(f"Latent folder {root} has no train/ directory")
    class_names = [p.name for p in _label_dirs(train_dir)]
    if not class_names:
        raise DataError(f"No class directories under {train_dir}")

    train_x, train_y = _read_split(train_dir, class_names)
    if test_dir.is_dir():
        test_x, test_y = _read_split(test_dir, class_names)
    else:
        test_x, test_y = np.empty((0, 0), dtype=np.float32), np.empty(0, dtype=np.int64)
    if test_x.size == 0:
        test_x = np.empty((0, train_x.shape[1]), dtype=np.float32)

    LOGGER.info(f"Loaded {len(train_x)} train / {len(test_x)} test latents from {root} ({len(class_names)} classes)")
    return LabeledDataset(train_x, train_y, test_x, test_y, tuple(class_names))


def load_queries(path, class_names) -> tuple[np.ndarray, np.ndarray | None]:
    """Queries from a single .lat file or a folder of <label>/*.lat.

    Labels are returned when every query sits in a directory named after a
    known class, otherwise None.
    """
    path = Path(path)
    if path.is_file():
        return load_latent(path)[None, :], None
    if not path.is_dir():
        raise StorageError(f"Query path not found: {path}")

    label_dirs = _label_dirs(path)
    if label_dirs and all(d.name in class_names for d in label_dirs):
        x, y = _read_split(path, list(class_names))
        return x, y
    files = sorted(path.rglob(f"*{LATENT_SUFFIX}"))
    if not files:
        raise DataError(f"No {LATENT_SUFFIX} files under {path}")
    return np.stack([load_latent(f) for f in files]), None


def write_latent_folder(dataset: LabeledDataset, root) -> Path:
    root = Path(root)
    for split, xs, ys in (("train", dataset.train_x, dataset.train_y), ("test", dataset.test_x, dataset.test_y)):
        for i, (x, y) in enumerate(zip(xs, ys)):
            save_latent(x, root / split / dataset.class_names[y] / f"{i:05d}{LATENT_SUFFIX}")
    return root
