"""Diffusion classifier over learned class prompts.

Each candidate class is scored by its Monte-Carlo denoising error
(1/N) Σ_i ‖ε_i − ε_θ(x_{t_i}, t_i, p_c)‖² with w_t = 1 and a uniform class
prior; the posterior is softmax(−error), computed in the relative form
p_i = 1 / Σ_j exp(err_i − err_j).
"""

import concurrent.futures
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp

from app.utils.errors import DivergenceError, FrozenModelError, ShapeError, StorageError
from ml.core.denoiser import NoisePredictor
from ml.core.diffusion import NoiseSchedule, PairBatch, add_noise, sample_pair_batch
from ml.core.rng import Stream, derive_rng
from ml.training.prompt_learning import ClassPrompt, prompt_matrix

__all__ = [
    "ClassifierConfig",
    "ErrorMatrix",
    "ClassifierReport",
    "class_error",
    "error_matrix",
    "posterior",
    "posterior_logsumexp",
    "classify",
    "classify_many",
    "write_reports_jsonl",
]

LOGGER = logging.getLogger(__name__)


class ClassifierConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_mc: int = Field(128, ge=1)
    shared_pairs: bool = True
    seed: int | None = None


@dataclass(frozen=True)
class ErrorMatrix:
    """Squared error per (candidate class, MC pair)."""

    errors: np.ndarray

    def __post_init__(self):
        if self.errors.ndim != 2:
            raise ShapeError(f"Error matrix must be 2-D, got shape {self.errors.shape}")
        if np.any(self.errors < 0):
            raise ValueError("Squared errors cannot be negative")

    @property
    def means(self) -> np.ndarray:
        return self.errors.mean(axis=1, dtype=np.float64)


@dataclass(frozen=True)
class ClassifierReport:
    predicted: int
    posterior: np.ndarray
    error_means: np.ndarray
    pairs_seed: int
    query_id: int = 0
    class_names: tuple[str, ...] = ()

    def to_record(self, true_label: int | None = None) -> dict:
        names = self.class_names or tuple(str(c) for c in range(len(self.posterior)))
        return {
            "query_id": self.query_id,
            "true_label": None if true_label is None else names[int(true_label)],
            "predicted_label": names[self.predicted],
            "errors": {n: float(e) for n, e in zip(names, self.error_means)},
            "posterior": {n: float(p) for n, p in zip(names, self.posterior)},
        }


def _require_frozen(model: NoisePredictor) -> None:
    if not model.frozen:
        raise FrozenModelError("The diffusion classifier requires a frozen backbone")


def _pair_errors(x: np.ndarray, c: np.ndarray, pairs: PairBatch, model, schedule) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != model.latent_dim:
        raise ShapeError(f"Query must be a latent of length {model.latent_dim}, got shape {x.shape}")
    x0 = np.broadcast_to(x, pairs.eps.shape)
    xt = add_noise(x0, pairs.eps, pairs.ts, schedule).xt
    pred = model.predict_noise(xt, pairs.ts, c)
    return np.mean(np.square(pairs.eps - pred), axis=1, dtype=np.float64)


def class_error(
    x: np.ndarray,
    prompt: ClassPrompt | np.ndarray,
    pairs: PairBatch | Sequence,
    model: NoisePredictor,
    schedule: NoiseSchedule,
) -> float:
    """Monte-Carlo estimate of the conditional denoising error of `x` under one prompt."""
    _require_frozen(model)
    if not isinstance(pairs, PairBatch):
        pairs = PairBatch.from_pairs(list(pairs))
    if len(pairs) == 0:
        raise ValueError("class_error needs at least one (t, eps) pair")
    c = prompt.vector if isinstance(prompt, ClassPrompt) else np.asarray(prompt)
    return float(np.mean(_pair_errors(x, c, pairs, model, schedule)))


def error_matrix(
    x: np.ndarray,
    prompts: Sequence[ClassPrompt] | np.ndarray,
    n_mc: int,
    model: NoisePredictor,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    shared_pairs: bool = True,
) -> ErrorMatrix:
    """Errors for every candidate; with shared pairs one (t, ε) set serves all classes."""
    matrix = prompt_matrix(prompts)
    if len(matrix) == 0:
        raise ValueError("At least one class prompt is required")
    dim = model.latent_dim
    shared = sample_pair_batch(n_mc, schedule.T, dim, rng) if shared_pairs else None
    rows = []
    for c in matrix:
        pairs = shared if shared is not None else sample_pair_batch(n_mc, schedule.T, dim, rng)
        rows.append(_pair_errors(x, c, pairs, model, schedule))
    return ErrorMatrix(np.stack(rows))


def posterior(errors) -> np.ndarray:
    """p_i = 1 / Σ_j exp(err_i − err_j): softmax(−err) in relative form."""
    e = np.asarray(errors, dtype=np.float64).reshape(-1)
    if e.size == 0:
        raise ValueError("posterior needs at least one class")
    if not np.all(np.isfinite(e)):
        raise DivergenceError("Non-finite class errors")
    with np.errstate(over="ignore"):
        return 1.0 / np.exp(e[:, None] - e[None, :]).sum(axis=1)


def posterior_logsumexp(errors) -> np.ndarray:
    """softmax(−err) via a stable log-sum-exp, kept for cross-checking `posterior`."""
    e = np.asarray(errors, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(e)):
        raise DivergenceError("Non-finite class errors")
    return np.exp(-e - logsumexp(-e))


def classify(
    x: np.ndarray,
    prompts: Sequence[ClassPrompt] | np.ndarray,
    cfg: ClassifierConfig,
    model: NoisePredictor,
    schedule: NoiseSchedule,
    query_id: int = 0,
    class_names: Sequence[str] | None = None,
) -> ClassifierReport:
    """Predict argmin of mean error (ties → lowest index) on stream (seed, QUERY, query_id)."""
    _require_frozen(model)
    seed = 0 if cfg.seed is None else cfg.seed
    rng = derive_rng(seed, Stream.QUERY, query_id)
    em = error_matrix(x, prompts, cfg.n_mc, model, schedule, rng, shared_pairs=cfg.shared_pairs)
    means = em.means
    if class_names is None and not isinstance(prompts, np.ndarray):
        class_names = [p.name for p in prompts]
    return ClassifierReport(
        predicted=int(np.argmin(means)),
        posterior=posterior(means),
        error_means=means,
        pairs_seed=seed,
        query_id=query_id,
        class_names=tuple(class_names or ()),
    )


def classify_many(
    queries: np.ndarray,
    prompts: Sequence[ClassPrompt] | np.ndarray,
    cfg: ClassifierConfig,
    model: NoisePredictor,
    schedule: NoiseSchedule,
    workers: int = 1,
    class_names: Sequence[str] | None = None,
) -> list[ClassifierReport]:
    """Classify every row of `queries`; query i always uses stream (seed, QUERY, i)."""
    queries = np.atleast_2d(np.asarray(queries))

    def run(i: int) -> ClassifierReport:
        return classify(queries[i], prompts, cfg, model, schedule, query_id=i, class_names=class_names)

    if workers <= 1:
        return [run(i) for i in range(len(queries))]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(len(queries))))


def write_reports_jsonl(reports: Sequence[ClassifierReport], path, true_labels=None) -> Path:
    path = Path(path)
    labels = [None] * len(reports) if true_labels is None else list(true_labels)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            for report, label in zip(reports, labels):
                f.write(json.dumps(report.to_record(label)) + "\n")
    except OSError as exc:
        raise StorageError(f"Cannot write {path}: {exc}") from exc
    LOGGER.info(f"Wrote {len(reports)} predictions → {path}")
    return path
