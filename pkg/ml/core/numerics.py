"""Dense array arithmetic, layer forward/backward primitives and gradient checks.

Tensors are plain float32 numpy arrays. Operations keep a float64 input dtype
so gradient checks can run in double precision against the same code paths.
"""

import logging
from typing import Callable, Mapping

import numpy as np

from app.utils.errors import DivergenceError, ShapeError

__all__ = [
    "DTYPE",
    "GradientRecord",
    "as_tensor",
    "ensure_finite",
    "add",
    "sub",
    "mul",
    "scale",
    "matvec",
    "mse",
    "linear_forward",
    "linear_backward",
    "silu_forward",
    "silu_backward",
    "finite_difference_gradient",
    "relative_error",
]

LOGGER = logging.getLogger(__name__)

DTYPE = np.float32

# reductions above this many terms accumulate in float64
_WIDE_ACCUMULATION = 10_000


def _result_dtype(*arrays: np.ndarray) -> np.dtype:
    if any(np.asarray(a).dtype == np.float64 for a in arrays):
        return np.dtype(np.float64)
    return np.dtype(DTYPE)


def as_tensor(x, dtype=None) -> np.ndarray:
    """Convert to a C-contiguous float array (float32 unless float64 is given)."""
    arr = np.asarray(x)
    if dtype is None:
        dtype = np.float64 if arr.dtype == np.float64 else DTYPE
    return np.ascontiguousarray(arr, dtype=dtype)


def ensure_finite(x: np.ndarray, what: str = "tensor", step: int | None = None) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"Non-finite values in {what}", step=step)
    return x


def _check_same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.ndim == 0 or b.ndim == 0:
        return
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _elementwise(a, b, op: str, fn) -> np.ndarray:
    a_arr, b_arr = np.asarray(a), np.asarray(b)
    _check_same_shape(a_arr, b_arr, op)
    dtype = _result_dtype(a_arr, b_arr)
    out = fn(a_arr.astype(dtype, copy=False), b_arr.astype(dtype, copy=False))
    return ensure_finite(np.asarray(out, dtype=dtype), op)


def add(a, b) -> np.ndarray:
    return _elementwise(a, b, "add", np.add)


def sub(a, b) -> np.ndarray:
    return _elementwise(a, b, "sub", np.subtract)


def mul(a, b) -> np.ndarray:
    return _elementwise(a, b, "mul", np.multiply)


def scale(a, factor: float) -> np.ndarray:
    a_arr = np.asarray(a)
    dtype = _result_dtype(a_arr)
    out = a_arr.astype(dtype, copy=False) * dtype.type(factor)
    return ensure_finite(out, "scale")


def matvec(W, x) -> np.ndarray:
    """Matrix-vector product W[m×n] · x[n]."""
    W_arr, x_arr = np.asarray(W), np.asarray(x)
    if W_arr.ndim != 2 or x_arr.ndim != 1:
        raise ShapeError(f"matvec expects a matrix and a vector, got {W_arr.shape} and {x_arr.shape}")
    if W_arr.shape[1] != x_arr.shape[0]:
        raise ShapeError(f"matvec: inner dimensions differ ({W_arr.shape[1]} vs {x_arr.shape[0]})")
    dtype = _result_dtype(W_arr, x_arr)
    out = W_arr.astype(dtype, copy=False) @ x_arr.astype(dtype, copy=False)
    return ensure_finite(out, "matvec")


def mse(a, b) -> float:
    """Mean of squared elementwise differences."""
    a_arr, b_arr = np.asarray(a), np.asarray(b)
    if a_arr.shape != b_arr.shape:
        raise ShapeError(f"mse: shape mismatch {a_arr.shape} vs {b_arr.shape}")
    if a_arr.size == 0:
        raise ShapeError("mse of empty tensors is undefined")
    dtype = _result_dtype(a_arr, b_arr)
    diff = a_arr.astype(dtype, copy=False) - b_arr.astype(dtype, copy=False)
    acc = np.float64 if diff.size > _WIDE_ACCUMULATION else dtype
    value = float(np.mean(np.square(diff), dtype=acc))
    if not np.isfinite(value):
        raise DivergenceError("mse is not finite")
    return value


# ───── layer forward/backward contract ─────

def linear_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched affine map: x[B×n] → x·Wᵀ + b, W is [m×n]."""
    return x @ W.T + b


def linear_backward(
    x: np.ndarray, W: np.ndarray, upstream: np.ndarray, need_params: bool = True
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Gradients of linear_forward given dL/d(out) of shape [B×m].

    Returns (dx, dW, db); dW and db are None unless need_params.
    """
    dx = upstream @ W
    if not need_params:
        return dx, None, None
    return dx, upstream.T @ x, upstream.sum(axis=0)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu_forward(x: np.ndarray) -> np.ndarray:
    return x * _sigmoid(x)


def silu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    s = _sigmoid(x)
    return upstream * (s * (1.0 + x * (1.0 - s)))


# ───── gradient bookkeeping and verification ─────

class GradientRecord(dict):
    """Parameter id → gradient tensor."""

    def validate(self, params: Mapping[str, np.ndarray]) -> "GradientRecord":
        for key, grad in self.items():
            if key not in params:
                raise ShapeError(f"Gradient for unknown parameter '{key}'")
            if np.shape(grad) != np.shape(params[key]):
                raise ShapeError(
                    f"Gradient shape {np.shape(grad)} does not match parameter '{key}' {np.shape(params[key])}"
                )
        return self

    def global_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(np.square(g, dtype=np.float64)) for g in self.values())))


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x, h: float = 1e-3
) -> np.ndarray:
    """Central-difference gradient of a scalar function, evaluated in float64."""
    base = np.array(x, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = float(f(base.copy()))
        flat[i] = orig - h
        f_minus = float(f(base.copy()))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise DivergenceError(f"Function is not finite around coordinate {i}")
        out[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(a, b) -> float:
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a_arr) + np.linalg.norm(b_arr), 1e-12)
    return float(np.linalg.norm(a_arr - b_arr) / denom)
