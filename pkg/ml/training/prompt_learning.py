"""Class-prompt learning through a frozen denoiser.

GCPL learns each class prompt on its own support set by minimising the
noise-prediction MSE. CoMPLe learns all prompts jointly and additionally
rewards each prompt for predicting the noise of other classes' samples
badly, weighted by λ.

"Epoch" here means one optimisation step over a mini-batch drawn from the
support set, so `epochs=2000` is 2000 optimizer steps.
"""

import concurrent.futures
import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from pydantic import ConfigDict, Field

from app.utils.errors import DataError, DivergenceError, FrozenModelError
from ml.core.denoiser import ConditionEmbedding, NoisePredictor
from ml.core.diffusion import NoiseSchedule, PairBatch, add_noise, sample_pair_batch
from ml.core.numerics import DTYPE, GradientRecord, mse
from ml.core.rng import Stream, derive_rng
from ml.training.optim import OptimizerConfig, OptimizerState, step
from ml.utils.templates import PromptTemplate

__all__ = [
    "GCPLConfig",
    "CoMPLeConfig",
    "ClassPrompt",
    "gcpl_loss",
    "train_gcpl",
    "train_gcpl_all",
    "comple_loss",
    "train_comple",
    "aligned_gcpl_config",
    "initial_prompts",
    "mean_pairwise_cosine_distance",
    "prompt_matrix",
]

LOGGER = logging.getLogger(__name__)

InitMode = Literal["initializer", "random"]
NegativePairing = Literal["cross_prompt", "cross_sample"]


class GCPLConfig(OptimizerConfig):
    lr: float = Field(5e-4, ge=0)
    epochs: int = Field(2000, ge=1)
    batch_size: int | None = Field(None, ge=1)
    init: InitMode = "initializer"
    init_noise: float = Field(0.02, ge=0)
    log_every: int = Field(200, ge=1)
    seed: int | None = None


class CoMPLeConfig(OptimizerConfig):
    model_config = ConfigDict(populate_by_name=True)

    lr: float = Field(1e-3, ge=0)
    epochs: int = Field(4000, ge=1)
    batch_size: int = Field(4, ge=1)
    lambda_: float = Field(0.001, ge=0, alias="lambda")
    negative_margin: float | None = Field(None, gt=0)
    negative_pairing: NegativePairing = "cross_prompt"
    init: InitMode = "initializer"
    init_noise: float = Field(0.02, ge=0)
    log_every: int = Field(200, ge=1)
    seed: int | None = None


@dataclass
class ClassPrompt:
    """Learned p_c for one class, plus the template text it stands in for."""

    class_id: int
    name: str
    embedding: ConditionEmbedding
    initializer_ref: str = "generic"
    text: str = ""
    losses: list[float] = field(default_factory=list, repr=False, compare=False)

    @property
    def vector(self) -> np.ndarray:
        return self.embedding.vector


def prompt_matrix(prompts: Sequence[ClassPrompt] | np.ndarray) -> np.ndarray:
    if isinstance(prompts, np.ndarray):
        return prompts
    return np.stack([p.vector for p in prompts])


def _require_frozen(model: NoisePredictor) -> None:
    if not model.frozen:
        raise FrozenModelError("Prompt learning requires a frozen backbone")


def _seed(cfg) -> int:
    return 0 if cfg.seed is None else cfg.seed


def _initial_vector(model: NoisePredictor, init: str, noise: float, rng: np.random.Generator) -> np.ndarray:
    if init == "random":
        return rng.standard_normal(model.cond_dim).astype(DTYPE)
    generic = np.asarray(model.generic_condition(), dtype=np.float64)
    return (generic + noise * rng.standard_normal(model.cond_dim)).astype(DTYPE)


def _initializer_ref(init: str, template: PromptTemplate | None) -> str:
    if init == "random":
        return "random"
    return template.initializer if template is not None else "generic"


def _draw_minibatch(
    rng: np.random.Generator, exemplars: np.ndarray, size: int, schedule: NoiseSchedule
) -> tuple[np.ndarray, PairBatch]:
    """Exemplars without replacement (all of them when size ≥ K), then one (t, ε) per row."""
    k = len(exemplars)
    idx = np.arange(k) if size >= k else rng.choice(k, size=size, replace=False)
    pairs = sample_pair_batch(len(idx), schedule.T, exemplars.shape[1], rng)
    return exemplars[idx], pairs


def _with_step(exc: DivergenceError, k: int, what: str) -> DivergenceError:
    if exc.step is not None:
        return exc
    return DivergenceError(f"{what} diverged: {exc}", step=k)


# ───── GCPL ─────

def _gcpl_objective(x0, c, model, schedule, pairs: PairBatch) -> tuple[float, np.ndarray]:
    xt = add_noise(x0, pairs.eps, pairs.ts, schedule).xt
    pred = model.predict_noise(xt, pairs.ts, c)
    loss = mse(pred, pairs.eps)
    coef = 2.0 / (len(pairs) * model.latent_dim)
    upstream = (pred - pairs.eps) * coef
    grad = model.backward(xt, pairs.ts, c, upstream, with_params=False)["c"]
    return loss, grad


def gcpl_loss(
    exemplars: np.ndarray,
    prompt: ClassPrompt | np.ndarray,
    model: NoisePredictor,
    schedule: NoiseSchedule,
    rng: np.random.Generator | None = None,
    pairs: PairBatch | None = None,
) -> tuple[float, np.ndarray]:
    """Mean ‖ε − ε_θ(x_t, t, p_c)‖² over the exemplars and its gradient w.r.t. p_c.

    One (t, ε) per exemplar, drawn from `rng` unless fixed `pairs` are given.
    """
    _require_frozen(model)
    exemplars = np.atleast_2d(np.asarray(exemplars))
    if len(exemplars) == 0:
        raise DataError("gcpl_loss needs at least one exemplar")
    c = prompt.vector if isinstance(prompt, ClassPrompt) else np.asarray(prompt)
    if pairs is None:
        if rng is None:
            raise ValueError("Either rng or pairs must be given")
        pairs = sample_pair_batch(len(exemplars), schedule.T, exemplars.shape[1], rng)
    return _gcpl_objective(exemplars, c, model, schedule, pairs)


def train_gcpl(
    support: np.ndarray,
    cfg: GCPLConfig,
    model: NoisePredictor,
    schedule: NoiseSchedule,
    class_id: int = 0,
    name: str | None = None,
    template: PromptTemplate | None = None,
) -> ClassPrompt:
    """p*_c = argmin over p_c of the GCPL loss on one class's support set.

    All draws for class `c` come from the stream (seed, PROMPT, c).
    """
    _require_frozen(model)
    support = np.atleast_2d(np.asarray(support))
    if len(support) == 0:
        raise DataError(f"Class {class_id} has an empty support set")

    rng = derive_rng(_seed(cfg), Stream.PROMPT, class_id)
    params = {"p": _initial_vector(model, cfg.init, cfg.init_noise, rng)}
    state = OptimizerState.from_config(cfg)
    size = cfg.batch_size or len(support)
    losses = []
    for k in range(1, cfg.epochs + 1):
        x0, pairs = _draw_minibatch(rng, support, size, schedule)
        try:
            loss, grad = _gcpl_objective(x0, params["p"], model, schedule, pairs)
            params, state = step(state, params, GradientRecord(p=grad))
        except DivergenceError as exc:
            raise _with_step(exc, k, f"GCPL for class {class_id}") from exc
        losses.append(loss)
        if k % cfg.log_every == 0:
            LOGGER.debug(f"gcpl class {class_id} step {k:5d}  loss {loss:.5f}")

    name = name if name is not None else str(class_id)
    return ClassPrompt(
        class_id=class_id,
        name=name,
        embedding=ConditionEmbedding(params["p"]),
        initializer_ref=_initializer_ref(cfg.init, template),
        text=template.render(name) if template is not None else "",
        losses=losses,
    )


def train_gcpl_all(
    support_sets: Sequence[np.ndarray],
    cfg: GCPLConfig,
    model: NoisePredictor,
    schedule: NoiseSchedule,
    class_names: Sequence[str] | None = None,
    template: PromptTemplate | None = None,
    workers: int = 1,
) -> list[ClassPrompt]:
    """Independent GCPL runs, one per class; results do not depend on `workers`."""
    _require_frozen(model)
    names = list(class_names) if class_names is not None else [str(c) for c in range(len(support_sets))]

    def run(c: int) -> ClassPrompt:
        return train_gcpl(support_sets[c], cfg, model, schedule, class_id=c, name=names[c], template=template)

    if workers <= 1:
        prompts = [run(c) for c in range(len(support_sets))]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            prompts = list(pool.map(run, range(len(support_sets))))
    LOGGER.info(f"GCPL: learned {len(prompts)} class prompts ({cfg.epochs} steps each)")
    return prompts


# ───── CoMPLe ─────

def _comple_objective(
    x0: np.ndarray,
    labels: np.ndarray,
    vectors,
    lam: float,
    model: NoisePredictor,
    schedule: NoiseSchedule,
    pairs: PairBatch,
    margin: float | None,
    pairing: NegativePairing = "cross_prompt",
) -> tuple[float, dict[int, np.ndarray]]:
    """Rows are evaluated one at a time so each row's arithmetic matches a 1-row GCPL step.

    For an ordered pair (i, j) of samples from different classes the negative
    term is ‖ε_i − ε_θ(x_t^i, t_i, p_{c_j})‖² under "cross_prompt" (sample i's
    noisy latent denoised with the other class's prompt, gradient to p_{c_j})
    and ‖ε_i − ε_θ(x_t^j, t_j, p_{c_j})‖² under "cross_sample".
    """
    batch, dim = x0.shape
    rows = range(batch)
    ts = [pairs.ts[j:j + 1] for j in rows]
    eps = [pairs.eps[j:j + 1] for j in rows]
    xts = [add_noise(x0[j:j + 1], eps[j], ts[j], schedule).xt for j in rows]
    preds = [model.predict_noise(xts[j], ts[j], vectors[labels[j]]) for j in rows]

    positive = sum(mse(preds[j], eps[j]) for j in rows) / batch
    pos_coef = 2.0 / (batch * dim)
    upstreams = [(preds[j] - eps[j]) * pos_coef for j in rows]
    # (row whose latent is denoised, class whose prompt is used, upstream)
    extra: list[tuple[int, int, np.ndarray]] = []

    negative = 0.0
    if lam > 0 and batch > 1:
        neg_coef = lam * 2.0 / (batch * (batch - 1) * dim)
        for j in rows:
            for i in rows:
                # same-class pairs contribute 0
                if i == j or labels[i] == labels[j]:
                    continue
                if pairing == "cross_prompt":
                    pred = model.predict_noise(xts[i], ts[i], vectors[labels[j]])
                else:
                    pred = preds[j]
                d = mse(pred, eps[i])
                if margin is not None and d >= margin:
                    negative += margin
                    continue
                negative += d
                if pairing == "cross_prompt":
                    extra.append((i, int(labels[j]), -neg_coef * (pred - eps[i])))
                else:
                    upstreams[j] = upstreams[j] - neg_coef * (pred - eps[i])
        negative /= batch * (batch - 1)

    grads: dict[int, np.ndarray] = {}
    for j in rows:
        c = int(labels[j])
        g = model.backward(xts[j], ts[j], vectors[c], upstreams[j], with_params=False)["c"]
        grads[c] = grads[c] + g if c in grads else g
    for i, c, upstream in extra:
        grads[c] = grads[c] + model.backward(xts[i], ts[i], vectors[c], upstream, with_params=False)["c"]
    return positive - lam * negative, grads


def comple_loss(
    batch_x: np.ndarray,
    labels,
    prompts: Sequence[ClassPrompt] | np.ndarray,
    lam: float,
    model: NoisePredictor,
    schedule: NoiseSchedule,
    rng: np.random.Generator | None = None,
    pairs: PairBatch | None = None,
    negative_margin: float | None = None,
    negative_pairing: NegativePairing = "cross_prompt",
) -> tuple[float, dict[int, np.ndarray]]:
    """positive − λ·negative over a batch of B labelled samples.

    positive = (1/B) Σ_j ‖ε_j − ε̂_j‖² with ε̂_j predicted under sample j's own
    class prompt. negative = (1/(B(B−1))) Σ_{i≠j, c_i≠c_j} ‖ε_i − ε̂_{i|j}‖²,
    where ε̂_{i|j} denoises sample i's latent with p_{c_j} ("cross_prompt") or is
    ε̂_j itself ("cross_sample"). Gradients are keyed by class index and only
    present for classes in the batch.
    """
    if negative_pairing not in ("cross_prompt", "cross_sample"):
        raise ValueError(f"Unknown negative pairing {negative_pairing!r}")
    _require_frozen(model)
    if lam < 0:
        raise ValueError(f"λ must be non-negative, got {lam}")
    batch_x = np.atleast_2d(np.asarray(batch_x))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(batch_x) == 0 or len(labels) != len(batch_x):
        raise DataError(f"Need one label per sample, got {len(labels)} labels for {len(batch_x)} samples")
    matrix = prompt_matrix(prompts)
    if labels.min() < 0 or labels.max() >= len(matrix):
        raise DataError(f"Batch label outside the {len(matrix)} known classes: {labels.tolist()}")
    if pairs is None:
        if rng is None:
            raise ValueError("Either rng or pairs must be given")
        pairs = sample_pair_batch(len(batch_x), schedule.T, batch_x.shape[1], rng)
    vectors = {int(c): matrix[c] for c in np.unique(labels)}
    return _comple_objective(
        batch_x, labels, vectors, lam, model, schedule, pairs, negative_margin, negative_pairing
    )


def _compose_batch(rng: np.random.Generator, n_classes: int, batch_size: int) -> np.ndarray:
    """B distinct classes when possible; extra slots filled with replacement."""
    if batch_size == n_classes:
        return rng.permutation(n_classes)
    if batch_size < n_classes:
        return rng.choice(n_classes, size=batch_size, replace=False)
    extra = rng.choice(n_classes, size=batch_size - n_classes, replace=True)
    return np.concatenate([rng.permutation(n_classes), extra])


def train_comple(
    support_sets: Sequence[np.ndarray],
    cfg: CoMPLeConfig,
    model: NoisePredictor,
    schedule: NoiseSchedule,
    class_names: Sequence[str] | None = None,
    template: PromptTemplate | None = None,
) -> list[ClassPrompt]:
    """All class prompts initialised together and optimised with one AdamW state.

    Class `c` draws its initial vector, exemplars and (t, ε) from (seed, PROMPT, c);
    batch composition comes from (seed, COMPOSE).
    """
    _require_frozen(model)
    n_classes = len(support_sets)
    if n_classes < 1:
        raise DataError("CoMPLe needs at least one class")
    supports = [np.atleast_2d(np.asarray(s)) for s in support_sets]
    for c, s in enumerate(supports):
        if len(s) == 0:
            raise DataError(f"Class {c} has an empty support set")
    names = list(class_names) if class_names is not None else [str(c) for c in range(n_classes)]

    seed = _seed(cfg)
    rngs = [derive_rng(seed, Stream.PROMPT, c) for c in range(n_classes)]
    compose = derive_rng(seed, Stream.COMPOSE)
    params = {f"p{c}": _initial_vector(model, cfg.init, cfg.init_noise, rngs[c]) for c in range(n_classes)}
    state = OptimizerState.from_config(cfg)
    losses = []

    for k in range(1, cfg.epochs + 1):
        labels = _compose_batch(compose, n_classes, cfg.batch_size)
        rows, ts, eps = [], [], []
        for c in labels:
            x0, pairs = _draw_minibatch(rngs[c], supports[c], 1, schedule)
            rows.append(x0)
            ts.append(pairs.ts)
            eps.append(pairs.eps)
        batch = PairBatch(np.concatenate(ts), np.concatenate(eps))
        vectors = {c: params[f"p{c}"] for c in range(n_classes)}
        try:
            loss, grads = _comple_objective(
                np.concatenate(rows), labels, vectors, cfg.lambda_, model, schedule, batch,
                cfg.negative_margin, cfg.negative_pairing,
            )
            record = GradientRecord({f"p{c}": g for c, g in grads.items()})
            params, state = step(state, params, record)
        except DivergenceError as exc:
            raise _with_step(exc, k, "CoMPLe") from exc
        losses.append(loss)
        if k % cfg.log_every == 0:
            LOGGER.debug(f"comple step {k:5d}  loss {loss:.5f}")

    LOGGER.info(
        f"CoMPLe: learned {n_classes} class prompts ({cfg.epochs} steps, λ={cfg.lambda_:g}, {cfg.negative_pairing})"
    )
    return [
        ClassPrompt(
            class_id=c,
            name=names[c],
            embedding=ConditionEmbedding(params[f"p{c}"]),
            initializer_ref=_initializer_ref(cfg.init, template),
            text=template.render(names[c]) if template is not None else "",
            losses=losses,
        )
        for c in range(n_classes)
    ]


def aligned_gcpl_config(comple_cfg: CoMPLeConfig, n_classes: int) -> GCPLConfig:
    """GCPL settings whose per-class runs reproduce a λ=0 CoMPLe run bit-for-bit.

    CoMPLe's per-class gradient is the 1-row GCPL gradient divided by B, and
    Adam's update is unchanged by that rescaling once eps_num is scaled too.
    The rescaling is exact only for B a power of two, B == n_classes and no
    clipping.
    """
    b = comple_cfg.batch_size
    if b != n_classes or b & (b - 1) or comple_cfg.grad_clip is not None:
        LOGGER.warning(
            "⚠️ Aligned GCPL is only bit-exact for B == n_classes, B a power of two and no clipping "
            f"(B={b}, classes={n_classes}, grad_clip={comple_cfg.grad_clip})"
        )
    return GCPLConfig(
        lr=comple_cfg.lr,
        beta1=comple_cfg.beta1,
        beta2=comple_cfg.beta2,
        eps_num=comple_cfg.eps_num * b,
        weight_decay=comple_cfg.weight_decay,
        grad_clip=comple_cfg.grad_clip,
        epochs=comple_cfg.epochs,
        batch_size=1,
        init=comple_cfg.init,
        init_noise=comple_cfg.init_noise,
        log_every=comple_cfg.log_every,
        seed=comple_cfg.seed,
    )


def initial_prompts(
    n_classes: int,
    cfg: GCPLConfig | CoMPLeConfig,
    model: NoisePredictor,
    class_names: Sequence[str] | None = None,
    template: PromptTemplate | None = None,
) -> list[ClassPrompt]:
    """The prompts both trainers start from, before any step is taken."""
    names = list(class_names) if class_names is not None else [str(c) for c in range(n_classes)]
    seed = _seed(cfg)
    prompts = []
    for c in range(n_classes):
        rng = derive_rng(seed, Stream.PROMPT, c)
        prompts.append(
            ClassPrompt(
                class_id=c,
                name=names[c],
                embedding=ConditionEmbedding(_initial_vector(model, cfg.init, cfg.init_noise, rng)),
                initializer_ref=_initializer_ref(cfg.init, template),
                text=template.render(names[c]) if template is not None else "",
            )
        )
    return prompts


def mean_pairwise_cosine_distance(prompts: Sequence[ClassPrompt] | np.ndarray) -> float:
    """Mean of 1 − cos(p_i, p_j) over unordered pairs; 0 for fewer than two prompts."""
    v = np.asarray(prompt_matrix(prompts), dtype=np.float64)
    if len(v) < 2:
        return 0.0
    unit = v / np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-12)
    cos = unit @ unit.T
    iu = np.triu_indices(len(v), k=1)
    return float(np.mean(1.0 - cos[iu]))
