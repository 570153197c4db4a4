"""Noise schedule, closed-form forward noising and (t, ε) pair sampling."""

import logging
from dataclasses import dataclass

import numpy as np

from app.utils.errors import ShapeError
from ml.core.numerics import DTYPE, ensure_finite

__all__ = [
    "NoiseSchedule",
    "NoisedSample",
    "TimestepNoisePair",
    "PairBatch",
    "make_linear_schedule",
    "make_schedule",
    "add_noise",
    "sample_pairs",
    "sample_pair_batch",
]

LOGGER = logging.getLogger(__name__)

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """β_t, α_t and ᾱ_t tables for t = 1..T (stored 0-based, in float64)."""

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        for name in ("betas", "alphas", "alpha_bars"):
            arr = getattr(self, name)
            if len(arr) != self.T:
                raise ShapeError(f"Schedule table '{name}' has length {len(arr)}, expected {self.T}")
            arr.flags.writeable = False

    def check_timestep(self, t) -> np.ndarray:
        t_arr = np.asarray(t)
        if not np.issubdtype(t_arr.dtype, np.integer):
            raise ValueError(f"Timesteps must be integers, got dtype {t_arr.dtype}")
        if t_arr.size and (t_arr.min() < 1 or t_arr.max() > self.T):
            raise ValueError(f"Timestep out of range [1, {self.T}]: {t}")
        return t_arr

    def alpha_bar(self, t):
        """ᾱ_t for a 1-based timestep or integer array of timesteps."""
        t_arr = self.check_timestep(t)
        return self.alpha_bars[t_arr - 1]


@dataclass(frozen=True)
class NoisedSample:
    x0: np.ndarray
    eps: np.ndarray
    t: int | np.ndarray
    xt: np.ndarray


@dataclass(frozen=True)
class TimestepNoisePair:
    t: int
    eps: np.ndarray


@dataclass(frozen=True)
class PairBatch:
    """n (t, ε) pairs in array form: ts[n], eps[n × dim]."""

    ts: np.ndarray
    eps: np.ndarray

    def __len__(self) -> int:
        return len(self.ts)

    def to_pairs(self) -> list[TimestepNoisePair]:
        return [TimestepNoisePair(int(t), e) for t, e in zip(self.ts, self.eps)]

    @classmethod
    def from_pairs(cls, pairs: list[TimestepNoisePair]) -> "PairBatch":
        if not pairs:
            raise ValueError("At least one (t, eps) pair is required")
        ts = np.array([p.t for p in pairs], dtype=np.int64)
        eps = np.stack([np.asarray(p.eps) for p in pairs])
        return cls(ts, eps)


def make_linear_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linearly interpolated β from beta_start to beta_end over T steps."""
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"Need 0 < beta_start <= beta_end < 1, got beta_start={beta_start}, beta_end={beta_end}"
        )
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def make_schedule(name: str, T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    if name != "linear":
        raise ValueError(f"Unknown noise schedule '{name}' (only 'linear' is supported)")
    return make_linear_schedule(T, beta_start, beta_end)


def add_noise(x0, eps, t, s: NoiseSchedule) -> NoisedSample:
    """x_t = √ᾱ_t · x0 + √(1−ᾱ_t) · ε.

    `x0`/`eps` may be a single latent with an integer `t`, or a batch [B × dim]
    with one timestep per row.
    """
    x0_arr = np.asarray(x0)
    eps_arr = np.asarray(eps)
    if x0_arr.shape != eps_arr.shape:
        raise ShapeError(f"add_noise: x0 shape {x0_arr.shape} differs from eps shape {eps_arr.shape}")
    dtype = np.float64 if x0_arr.dtype == np.float64 else DTYPE

    abar = s.alpha_bar(t)
    if np.ndim(abar) == 1:
        if x0_arr.ndim != 2 or len(abar) != x0_arr.shape[0]:
            raise ShapeError(
                f"add_noise: {len(abar)} timesteps for a batch of shape {x0_arr.shape}"
            )
        abar = abar[:, None]
    sqrt_ab = np.sqrt(abar).astype(dtype)
    sqrt_1m = np.sqrt(1.0 - abar).astype(dtype)
    xt = sqrt_ab * x0_arr.astype(dtype, copy=False) + sqrt_1m * eps_arr.astype(dtype, copy=False)
    return NoisedSample(x0=x0_arr, eps=eps_arr, t=t, xt=ensure_finite(xt, "x_t"))


def sample_pair_batch(n: int, T: int, dim: int, rng: np.random.Generator) -> PairBatch:
    """n pairs with t ~ U{1..T} and ε ~ N(0, I); timesteps are drawn before noise."""
    if n < 1:
        raise ValueError(f"Need at least one pair, got n={n}")
    ts = rng.integers(1, T + 1, size=n)
    eps = rng.standard_normal((n, dim), dtype=DTYPE)
    return PairBatch(ts=ts, eps=eps)


def sample_pairs(n: int, T: int, dim: int, rng: np.random.Generator) -> list[TimestepNoisePair]:
    return sample_pair_batch(n, T, dim, rng).to_pairs()
