"""N-way K-shot episodes over a fixed train/test split.

Support exemplars are sampled once per seed from the train split; queries are
the whole test split of the chosen classes, relabelled episode-locally.
"""

import logging
from dataclasses import dataclass

import numpy as np

from app.utils.errors import DataError
from ml.core.rng import Stream, derive_rng
from ml.utils.synthetic import LabeledDataset

__all__ = ["Episode", "build_episode"]

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class Episode:
    n_way: int
    k_shot: int
    classes: tuple[int, ...]
    class_names: tuple[str, ...]
    support: tuple[np.ndarray, ...]
    queries_x: np.ndarray
    queries_y: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise DataError("Episode classes must be distinct")
        if len(self.support) != self.n_way:
            raise DataError(f"Expected {self.n_way} support sets, got {len(self.support)}")
        for s in self.support:
            if len(s) != self.k_shot:
                raise DataError(f"Every support set needs exactly {self.k_shot} exemplars")

    @property
    def n_queries(self) -> int:
        return len(self.queries_y)


def build_episode(dataset: LabeledDataset, n_way: int | None, k_shot: int, seed: int) -> Episode:
    """Sample an episode; `n_way=None` or `n_way == C` takes every class in order."""
    n_classes = dataset.n_classes
    n_way = n_classes if n_way is None else n_way
    if n_way < 1 or k_shot < 1:
        raise DataError(f"n_way and k_shot must be positive, got n_way={n_way}, k_shot={k_shot}")
    if n_way > n_classes:
        raise DataError(f"Requested {n_way}-way episodes but the dataset has {n_classes} classes")

    rng = derive_rng(seed, Stream.EPISODE)
    if n_way == n_classes:
        classes = np.arange(n_classes)
    else:
        classes = np.sort(rng.choice(n_classes, size=n_way, replace=False))

    support, queries_x, queries_y = [], [], []
    for local, c in enumerate(classes):
        pool = dataset.class_train(int(c))
        if len(pool) < k_shot:
            raise DataError(
                f"Class '{dataset.class_names[c]}' has {len(pool)} training samples, {k_shot}-shot requested"
            )
        idx = rng.choice(len(pool), size=k_shot, replace=False)
        support.append(pool[idx])
        held_out = dataset.class_test(int(c))
        queries_x.append(held_out)
        queries_y.append(np.full(len(held_out), local, dtype=np.int64))

    episode = Episode(
        n_way=n_way,
        k_shot=k_shot,
        classes=tuple(int(c) for c in classes),
        class_names=tuple(dataset.class_names[c] for c in classes),
        support=tuple(support),
        queries_x=np.concatenate(queries_x) if queries_x else np.empty((0, dataset.latent_dim)),
        queries_y=np.concatenate(queries_y),
        seed=seed,
    )
    LOGGER.debug(f"Episode seed={seed}: {n_way}-way {k_shot}-shot, {episode.n_queries} queries")
    return episode
