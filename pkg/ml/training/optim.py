"""AdamW with decoupled weight decay, over a dict of named numpy parameters."""

import logging
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ml.core.numerics import GradientRecord, ensure_finite

__all__ = ["OptimizerConfig", "OptimizerState", "step"]

LOGGER = logging.getLogger(__name__)


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(1e-3, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps_num: float = Field(1e-8, gt=0)
    weight_decay: float = Field(0.01, ge=0)
    grad_clip: float | None = Field(None, gt=0)


@dataclass
class OptimizerState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps_num: float = 1e-8
    weight_decay: float = 0.01
    grad_clip: float | None = None
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    k: int = 0

    @classmethod
    def from_config(cls, cfg: OptimizerConfig) -> "OptimizerState":
        return cls(
            lr=cfg.lr,
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            eps_num=cfg.eps_num,
            weight_decay=cfg.weight_decay,
            grad_clip=cfg.grad_clip,
        )


def _clip(grads: GradientRecord, max_norm: float) -> GradientRecord:
    norm = grads.global_norm()
    if norm <= max_norm:
        return grads
    factor = max_norm / norm
    return GradientRecord({name: g * g.dtype.type(factor) for name, g in grads.items()})


def step(
    state: OptimizerState, params: dict[str, np.ndarray], grads: GradientRecord
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One AdamW update.

    Parameters missing from `grads` are returned unchanged; the step counter
    advances once per call regardless. `params` is never written in place.
    """
    grads = GradientRecord(grads).validate(params)
    for name, g in grads.items():
        ensure_finite(g, f"gradient '{name}'", step=state.k + 1)
    if state.grad_clip is not None:
        grads = _clip(grads, state.grad_clip)

    state.k += 1
    bc1 = 1.0 - state.beta1**state.k
    bc2 = 1.0 - state.beta2**state.k

    updated = dict(params)
    for name, g in grads.items():
        p = params[name]
        g = np.asarray(g, dtype=p.dtype)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_p = p - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps_num) + state.weight_decay * p)
        updated[name] = ensure_finite(new_p.astype(p.dtype, copy=False), f"parameter '{name}'", step=state.k)
        state.m[name] = m
        state.v[name] = v
    return updated, state
