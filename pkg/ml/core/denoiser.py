"""Conditional noise predictor ε_θ(x_t, t, c).

Fixed architecture: concat(x_t, sinusoidal(t), c) → Linear → SiLU → Linear →
SiLU → Linear. The backward pass is written out layer by layer against the
forward/backward contract in `ml.core.numerics`.
"""

import logging
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from app.utils.errors import DivergenceError, FrozenModelError, ShapeError
from ml.core.numerics import (
    DTYPE,
    GradientRecord,
    linear_backward,
    linear_forward,
    silu_backward,
    silu_forward,
)

__all__ = [
    "PARAM_ORDER",
    "DenoiserArchitecture",
    "ConditionEmbedding",
    "DenoiserModel",
    "NoisePredictor",
    "time_embedding",
    "predict_noise",
    "predict_noise_backward",
]

LOGGER = logging.getLogger(__name__)

PARAM_ORDER = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass(frozen=True)
class DenoiserArchitecture:
    latent_dim: int = 16
    time_embed_dim: int = 16
    cond_dim: int = 16
    hidden_dim: int = 128
    n_hidden_layers: int = 2
    num_timesteps: int = 1000
    n_classes: int = 0

    def __post_init__(self):
        if self.n_hidden_layers != 2:
            raise ValueError(f"The denoiser has exactly 2 hidden layers, got {self.n_hidden_layers}")
        if self.time_embed_dim < 4 or self.time_embed_dim % 2:
            raise ValueError(f"time_embed_dim must be even and >= 4, got {self.time_embed_dim}")
        for name in ("latent_dim", "cond_dim", "hidden_dim", "num_timesteps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_classes < 0:
            raise ValueError("n_classes must be non-negative")

    @property
    def input_dim(self) -> int:
        return self.latent_dim + self.time_embed_dim + self.cond_dim

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        h = self.hidden_dim
        return {
            "w1": (h, self.input_dim),
            "b1": (h,),
            "w2": (h, h),
            "b2": (h,),
            "w3": (self.latent_dim, h),
            "b3": (self.latent_dim,),
        }

    def descriptor(self) -> tuple[int, ...]:
        return (
            self.latent_dim,
            self.time_embed_dim,
            self.cond_dim,
            self.hidden_dim,
            self.n_hidden_layers,
            self.num_timesteps,
            self.n_classes,
        )


@dataclass(frozen=True)
class ConditionEmbedding:
    """c_θ(p_c); at this scale the mapping is the identity on the learnable vector."""

    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector)
        if vec.ndim != 1:
            raise ShapeError(f"A condition embedding is a vector, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise DivergenceError("Condition embedding has non-finite values")

    def __len__(self) -> int:
        return len(self.vector)


@runtime_checkable
class NoisePredictor(Protocol):
    """What prompt learning and the classifier need from a backbone."""

    frozen: bool

    @property
    def latent_dim(self) -> int: ...

    @property
    def cond_dim(self) -> int: ...

    def generic_condition(self) -> np.ndarray: ...

    def predict_noise(self, xt, t, c) -> np.ndarray: ...

    def backward(self, xt, t, c, upstream, with_params: bool | None = None) -> GradientRecord: ...


@dataclass
class DenoiserModel:
    arch: DenoiserArchitecture
    params: dict[str, np.ndarray]
    anchors: np.ndarray
    frozen: bool = False
    history: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        shapes = self.arch.param_shapes()
        for name in PARAM_ORDER:
            if name not in self.params:
                raise ShapeError(f"Missing denoiser parameter '{name}'")
            if self.params[name].shape != shapes[name]:
                raise ShapeError(
                    f"Parameter '{name}' has shape {self.params[name].shape}, expected {shapes[name]}"
                )
        expected = (self.arch.n_classes, self.arch.cond_dim)
        if self.anchors.shape != expected:
            raise ShapeError(f"Anchor conditions have shape {self.anchors.shape}, expected {expected}")

    # ───── construction ─────

    @classmethod
    def initialize(
        cls, arch: DenoiserArchitecture, rng: np.random.Generator, anchors: np.ndarray | None = None
    ) -> "DenoiserModel":
        """Weights ~ N(0, 1/fan_in), zero biases."""
        params = {}
        for name, shape in arch.param_shapes().items():
            if name.startswith("w"):
                params[name] = (rng.standard_normal(shape) / np.sqrt(shape[1])).astype(DTYPE)
            else:
                params[name] = np.zeros(shape, dtype=DTYPE)
        if anchors is None:
            anchors = np.zeros((arch.n_classes, arch.cond_dim), dtype=DTYPE)
        return cls(arch=arch, params=params, anchors=np.asarray(anchors, dtype=DTYPE))

    @classmethod
    def zeros(cls, arch: DenoiserArchitecture) -> "DenoiserModel":
        params = {name: np.zeros(shape, dtype=DTYPE) for name, shape in arch.param_shapes().items()}
        anchors = np.zeros((arch.n_classes, arch.cond_dim), dtype=DTYPE)
        return cls(arch=arch, params=params, anchors=anchors)

    # ───── state ─────

    @property
    def latent_dim(self) -> int:
        return self.arch.latent_dim

    @property
    def cond_dim(self) -> int:
        return self.arch.cond_dim

    @property
    def dtype(self) -> np.dtype:
        return self.params["w1"].dtype

    def freeze(self) -> "DenoiserModel":
        for arr in (*self.params.values(), self.anchors):
            arr.flags.writeable = False
        self.frozen = True
        return self

    def update_params(self, params: dict[str, np.ndarray]) -> None:
        if self.frozen:
            raise FrozenModelError("Cannot update parameters of a frozen backbone")
        shapes = self.arch.param_shapes()
        for name, value in params.items():
            if value.shape != shapes[name]:
                raise ShapeError(f"Parameter '{name}' update has shape {value.shape}, expected {shapes[name]}")
        self.params = {**self.params, **params}

    def astype(self, dtype) -> "DenoiserModel":
        """Copy in another precision (used by float64 gradient checks)."""
        copy = DenoiserModel(
            arch=self.arch,
            params={k: v.astype(dtype) for k, v in self.params.items()},
            anchors=self.anchors.astype(dtype),
        )
        return copy.freeze() if self.frozen else copy

    def parameter_bytes(self) -> bytes:
        return b"".join(self.params[k].tobytes() for k in PARAM_ORDER) + self.anchors.tobytes()

    def generic_condition(self) -> np.ndarray:
        """Mean of the pretraining anchor conditions: the class-agnostic starting point."""
        if self.arch.n_classes == 0:
            return np.zeros(self.arch.cond_dim, dtype=self.dtype)
        return self.anchors.mean(axis=0).astype(self.dtype)

    # ───── computation ─────

    def predict_noise(self, xt, t, c) -> np.ndarray:
        return predict_noise(self, xt, t, c)

    def backward(self, xt, t, c, upstream, with_params: bool | None = None) -> GradientRecord:
        return predict_noise_backward(self, xt, t, c, upstream, with_params=with_params)


def time_embedding(t, dim: int, T: int) -> np.ndarray:
    """[sin(t·w_k), cos(t·w_k)] with w_k = T^(−k/(half−1)), k = 0..half−1."""
    half = dim // 2
    freqs = np.exp(-np.log(float(T)) * np.arange(half, dtype=np.float64) / (half - 1))
    angles = np.asarray(t, dtype=np.float64).reshape(-1, 1) * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


@dataclass
class _Cache:
    z: np.ndarray
    a1: np.ndarray
    h1: np.ndarray
    a2: np.ndarray
    h2: np.ndarray
    single: bool
    shared_c: bool


def _forward(model: DenoiserModel, xt, t, c) -> tuple[np.ndarray, _Cache]:
    arch = model.arch
    dtype = model.dtype

    if isinstance(c, ConditionEmbedding):
        c = c.vector
    xt_arr = np.asarray(xt)
    single = xt_arr.ndim == 1
    if single:
        xt_arr = xt_arr[None, :]
    if xt_arr.ndim != 2 or xt_arr.shape[1] != arch.latent_dim:
        raise ShapeError(f"x_t must have {arch.latent_dim} coordinates, got shape {np.shape(xt)}")
    batch = xt_arr.shape[0]

    t_arr = np.asarray(t)
    if not np.issubdtype(t_arr.dtype, np.integer):
        raise ValueError(f"Timesteps must be integers, got dtype {t_arr.dtype}")
    t_arr = np.broadcast_to(t_arr, (batch,)) if t_arr.ndim == 0 else t_arr
    if t_arr.shape != (batch,):
        raise ShapeError(f"Expected {batch} timesteps, got shape {t_arr.shape}")
    if t_arr.min() < 1 or t_arr.max() > arch.num_timesteps:
        raise ValueError(f"Timestep out of range [1, {arch.num_timesteps}]")

    c_arr = np.asarray(c)
    shared_c = c_arr.ndim == 1
    if shared_c:
        if c_arr.shape[0] != arch.cond_dim:
            raise ShapeError(f"Condition must have length {arch.cond_dim}, got {c_arr.shape[0]}")
        c_arr = np.broadcast_to(c_arr, (batch, arch.cond_dim))
    elif c_arr.shape != (batch, arch.cond_dim):
        raise ShapeError(f"Conditions must have shape {(batch, arch.cond_dim)}, got {c_arr.shape}")

    temb = time_embedding(t_arr, arch.time_embed_dim, arch.num_timesteps)
    z = np.concatenate(
        [xt_arr.astype(dtype, copy=False), temb.astype(dtype), c_arr.astype(dtype, copy=False)], axis=1
    )

    p = model.params
    a1 = linear_forward(z, p["w1"], p["b1"])
    h1 = silu_forward(a1)
    a2 = linear_forward(h1, p["w2"], p["b2"])
    h2 = silu_forward(a2)
    out = linear_forward(h2, p["w3"], p["b3"])
    if not np.all(np.isfinite(out)):
        raise DivergenceError("Denoiser output is not finite")
    return out, _Cache(z=z, a1=a1, h1=h1, a2=a2, h2=h2, single=single, shared_c=shared_c)


def predict_noise(model: DenoiserModel, xt, t, c) -> np.ndarray:
    """ε̂ with the same shape as `xt` (a latent or a batch of latents)."""
    out, cache = _forward(model, xt, t, c)
    return out[0] if cache.single else out


def predict_noise_backward(
    model: DenoiserModel, xt, t, c, upstream, with_params: bool | None = None
) -> GradientRecord:
    """Pull `upstream` = dL/dε̂ back to the condition and, if unfrozen, the parameters.

    The condition gradient has the shape `c` was given in: a shared vector
    receives the sum over the batch.
    """
    if with_params is None:
        with_params = not model.frozen
    if with_params and model.frozen:
        raise FrozenModelError("Parameter gradients requested from a frozen backbone")

    out, cache = _forward(model, xt, t, c)
    g = np.asarray(upstream, dtype=model.dtype)
    if cache.single and g.ndim == 1:
        g = g[None, :]
    if g.shape != out.shape:
        raise ShapeError(f"Upstream gradient shape {np.shape(upstream)} does not match output {out.shape}")

    p = model.params
    dh2, dw3, db3 = linear_backward(cache.h2, p["w3"], g, with_params)
    da2 = silu_backward(cache.a2, dh2)
    dh1, dw2, db2 = linear_backward(cache.h1, p["w2"], da2, with_params)
    da1 = silu_backward(cache.a1, dh1)
    dz, dw1, db1 = linear_backward(cache.z, p["w1"], da1, with_params)

    offset = model.arch.latent_dim + model.arch.time_embed_dim
    dc = dz[:, offset:]
    dc = dc.sum(axis=0) if cache.shared_c else dc

    record = GradientRecord(c=dc)
    if with_params:
        record.update(w1=dw1, b1=db1, w2=dw2, b2=db2, w3=dw3, b3=db3)
    return record
