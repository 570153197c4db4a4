"""Denoiser stand-ins with known answers, for loss and classifier tests."""

import numpy as np

from ml.core.numerics import GradientRecord


class _Stub:
    frozen = True

    def __init__(self, latent_dim: int, cond_dim: int, generic: np.ndarray | None = None):
        self._latent_dim = latent_dim
        self._cond_dim = cond_dim
        self._generic = np.zeros(cond_dim) if generic is None else np.asarray(generic, dtype=np.float64)

    @property
    def latent_dim(self) -> int:
        return self._latent_dim

    @property
    def cond_dim(self) -> int:
        return self._cond_dim

    def generic_condition(self) -> np.ndarray:
        return self._generic

    def _cond_grad(self, c, upstream) -> GradientRecord:
        c = np.asarray(c)
        g = np.zeros(np.atleast_2d(upstream).shape[:1] + (self._cond_dim,))
        return GradientRecord(c=g.sum(axis=0) if c.ndim == 1 else g)


class PerfectOracleDenoiser(_Stub):
    """Recovers the exact noise from x_t given the clean latent(s) it was built with."""

    def __init__(self, x0: np.ndarray, schedule, cond_dim: int):
        x0 = np.asarray(x0, dtype=np.float64)
        super().__init__(x0.shape[-1], cond_dim)
        self.x0 = x0
        self.schedule = schedule

    def predict_noise(self, xt, t, c):
        abar = self.schedule.alpha_bar(np.asarray(t))
        abar = abar[:, None] if np.ndim(abar) == 1 else abar
        return (np.asarray(xt, dtype=np.float64) - np.sqrt(abar) * self.x0) / np.sqrt(1.0 - abar)

    def backward(self, xt, t, c, upstream, with_params=None):
        return self._cond_grad(c, upstream)


class ZeroDenoiser(_Stub):
    def predict_noise(self, xt, t, c):
        return np.zeros_like(np.asarray(xt, dtype=np.float64))

    def backward(self, xt, t, c, upstream, with_params=None):
        return self._cond_grad(c, upstream)


class LinearDenoiser(_Stub):
    """ε̂ = A·x_t + E·c, independent of t."""

    def __init__(self, A: np.ndarray, E: np.ndarray, generic: np.ndarray | None = None):
        super().__init__(A.shape[0], E.shape[1], generic)
        self.A = A
        self.E = E

    def predict_noise(self, xt, t, c):
        xt = np.asarray(xt, dtype=np.float64)
        c = np.asarray(c, dtype=np.float64)
        return xt @ self.A.T + np.atleast_2d(c) @ self.E.T

    def backward(self, xt, t, c, upstream, with_params=None):
        dc = np.atleast_2d(np.asarray(upstream, dtype=np.float64)) @ self.E
        return GradientRecord(c=dc.sum(axis=0) if np.ndim(c) == 1 else dc)


class NaNDenoiser(ZeroDenoiser):
    """Every prediction is NaN, so the first training step diverges."""

    def predict_noise(self, xt, t, c):
        return np.full(np.shape(xt), np.nan)
