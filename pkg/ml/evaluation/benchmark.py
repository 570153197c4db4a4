"""Episodic few-shot benchmark: (n_way, shots, seed) cells → accuracy → mean ± std.

Methods:
    gcpl       per-class prompts learned independently
    comple     prompts learned jointly with the contrastive term
    untrained  the initial prompts both trainers start from
    random     null control, fresh N(0, 1) prompts for every query
    oracle     the backbone's own anchor conditions (upper bound)
"""

import concurrent.futures
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score

from app.utils.errors import DivergenceError, GCPLError
from ml.core.denoiser import DenoiserModel
from ml.core.diffusion import NoiseSchedule
from ml.core.rng import Stream, derive_rng
from ml.inference.classifier import ClassifierConfig, classify, classify_many
from ml.training.prompt_learning import (
    CoMPLeConfig,
    GCPLConfig,
    initial_prompts,
    train_comple,
    train_gcpl_all,
)
from ml.utils.episodes import Episode, build_episode
from ml.utils.synthetic import LabeledDataset
from ml.utils.templates import PromptTemplate

__all__ = [
    "METHODS",
    "BenchmarkContext",
    "CellResult",
    "BenchmarkReport",
    "episode_prompts",
    "run_cell",
    "run_benchmark",
]

LOGGER = logging.getLogger(__name__)

METHODS = ("gcpl", "comple", "untrained", "random", "oracle")


@dataclass(frozen=True)
class BenchmarkContext:
    """Everything a cell needs besides (method, shots, seed)."""

    dataset: LabeledDataset
    model: DenoiserModel
    schedule: NoiseSchedule
    gcpl: GCPLConfig = field(default_factory=GCPLConfig)
    comple: CoMPLeConfig = field(default_factory=CoMPLeConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    template: PromptTemplate | None = None
    n_way: int | None = None
    workers: int = 1
    record_wall_clock: bool = False
    spec_name: str = "reference"


@dataclass(frozen=True)
class CellResult:
    method: str
    n_way: int
    shots: int
    seed: int
    accuracy: float
    wall_clock_s: float
    n_queries: int


@dataclass
class BenchmarkReport:
    method: str
    shots: list[int]
    seeds: list[int]
    cells: list[CellResult]
    spec_name: str = "reference"
    template: dict | None = None

    @property
    def wall_clock_s(self) -> float:
        return float(sum(c.wall_clock_s for c in self.cells))

    def accuracies(self, shots: int, n_way: int | None = None) -> list[float]:
        return [c.accuracy for c in self.cells if c.shots == shots and (n_way is None or c.n_way == n_way)]

    def mean_accuracy(self, shots: int) -> float:
        return float(np.mean(self.accuracies(shots)))

    def to_frame(self) -> pd.DataFrame:
        columns = ["method", "n_way", "shots", "seed", "accuracy", "wall_clock_s"]
        return pd.DataFrame([asdict(c) for c in self.cells], columns=[*columns, "n_queries"])[columns]

    def summary(self) -> pd.DataFrame:
        """Mean ± sample std per (n_way, shots); std is NaN below two seeds."""
        frame = self.to_frame()
        if len(self.seeds) < 2:
            LOGGER.warning(f"⚠️ {self.method}: fewer than two seeds, std is undefined")
        grouped = frame.groupby(["method", "n_way", "shots"], sort=True)["accuracy"]
        out = grouped.agg(["mean", "std", "count"]).reset_index()
        return out.rename(columns={"count": "n_seeds"})

    def to_dict(self) -> dict:
        summary = self.summary()
        summary = summary.astype(object).where(pd.notna(summary), None)
        return {
            "method": self.method,
            "spec_name": self.spec_name,
            "template": self.template,
            "shots": list(self.shots),
            "seeds": list(self.seeds),
            "wall_clock_s": self.wall_clock_s,
            "cells": [asdict(c) for c in self.cells],
            "summary": summary.to_dict(orient="records"),
        }


def _seeded(cfg, seed: int):
    return cfg.model_copy(update={"seed": seed})


def episode_prompts(method: str, episode: Episode, ctx: BenchmarkContext, seed: int):
    """Prompts for every method except `random`, which redraws per query."""
    names = episode.class_names
    if method == "gcpl":
        return train_gcpl_all(
            episode.support, _seeded(ctx.gcpl, seed), ctx.model, ctx.schedule,
            class_names=names, template=ctx.template, workers=ctx.workers,
        )
    if method == "comple":
        return train_comple(
            episode.support, _seeded(ctx.comple, seed), ctx.model, ctx.schedule,
            class_names=names, template=ctx.template,
        )
    if method == "untrained":
        return initial_prompts(episode.n_way, _seeded(ctx.gcpl, seed), ctx.model, names, ctx.template)
    if method == "oracle":
        return ctx.model.anchors[list(episode.classes)]
    raise ValueError(f"Unknown method '{method}'. Known methods: {', '.join(METHODS)}")


def _null_control_predictions(episode: Episode, ctx: BenchmarkContext, cls_cfg: ClassifierConfig, seed: int):
    predictions = []
    for i, x in enumerate(episode.queries_x):
        rng = derive_rng(seed, Stream.NULL_PROMPTS, i)
        prompts = rng.standard_normal((episode.n_way, ctx.model.cond_dim)).astype(np.float32)
        predictions.append(classify(x, prompts, cls_cfg, ctx.model, ctx.schedule, query_id=i).predicted)
    return np.asarray(predictions)


def run_cell(method: str, ctx: BenchmarkContext, shots: int, seed: int) -> CellResult:
    if method not in METHODS:
        raise ValueError(f"Unknown method '{method}'. Known methods: {', '.join(METHODS)}")
    started = time.perf_counter()
    episode = build_episode(ctx.dataset, ctx.n_way, shots, seed)
    cls_cfg = _seeded(ctx.classifier, seed)
    if method == "random":
        predicted = _null_control_predictions(episode, ctx, cls_cfg, seed)
    else:
        prompts = episode_prompts(method, episode, ctx, seed)
        reports = classify_many(
            episode.queries_x, prompts, cls_cfg, ctx.model, ctx.schedule,
            workers=ctx.workers, class_names=episode.class_names,
        )
        predicted = np.asarray([r.predicted for r in reports])
    accuracy = float(accuracy_score(episode.queries_y, predicted))
    elapsed = time.perf_counter() - started if ctx.record_wall_clock else 0.0
    LOGGER.info(
        f"{method:<9} {episode.n_way}-way {shots:2d}-shot seed {seed}  accuracy {accuracy:.4f}  ({elapsed:.1f}s)"
    )
    return CellResult(
        method=method,
        n_way=episode.n_way,
        shots=shots,
        seed=seed,
        accuracy=accuracy,
        wall_clock_s=round(elapsed, 3),
        n_queries=episode.n_queries,
    )


def _run_in(ctx: BenchmarkContext, method: str, cell) -> CellResult:
    shots, seed = cell
    where = f"[method={method}, shots={shots}, seed={seed}]"
    try:
        return run_cell(method, ctx, shots, seed)
    except DivergenceError as exc:
        wrapped = DivergenceError(f"{exc} {where}")
        wrapped.step = exc.step
        raise wrapped from exc
    except GCPLError as exc:
        raise type(exc)(f"{exc} {where}") from exc


def run_benchmark(method: str, shots, seeds, ctx: BenchmarkContext) -> BenchmarkReport:
    """Every (shots, seed) cell for one method; cells may run in parallel, results are ordered."""
    shots, seeds = [int(s) for s in shots], [int(s) for s in seeds]
    grid = [(k, s) for k in shots for s in seeds]

    if ctx.workers > 1 and len(grid) > 1:
        inner = replace(ctx, workers=1)
        with concurrent.futures.ThreadPoolExecutor(max_workers=ctx.workers) as pool:
            cells = list(pool.map(lambda cell: _run_in(inner, method, cell), grid))
    else:
        cells = [_run_in(ctx, method, cell) for cell in grid]

    template = None
    if ctx.template is not None:
        template = {
            "dataset": ctx.template.dataset,
            "template": ctx.template.template,
            "initializer": ctx.template.initializer,
            "concept": ctx.template.concept,
        }
    return BenchmarkReport(
        method=method, shots=shots, seeds=seeds, cells=cells, spec_name=ctx.spec_name, template=template
    )
