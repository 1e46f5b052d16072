"""Pure-numpy kernel implementations (fallback backend)."""

from __future__ import annotations

import numpy as np

from ..quant import QuantType, dequantize_rows

NAME = "numpy"


def set_num_threads(n: int) -> None:
    # single numpy call path; thread count has no effect on results
    pass


def rms_norm(x: np.ndarray, weight: np.ndarray, eps: float) -> np.ndarray:
    x64 = x.astype(np.float64)
    ms = np.mean(x64 * x64, axis=-1, keepdims=True)
    return (x64 / np.sqrt(ms + eps) * weight.astype(np.float64)).astype(np.float32)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    x64 = x.astype(np.float64)
    m = np.max(x64, axis=-1, keepdims=True)
    # all-masked rows would propagate nan through -inf - -inf
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x64 - m)
    return (e / np.sum(e, axis=-1, keepdims=True)).astype(np.float32)


def silu(x: np.ndarray) -> np.ndarray:
    x64 = x.astype(np.float64)
    return (x64 / (1.0 + np.exp(-x64))).astype(np.float32)


def rope_rotate(x: np.ndarray, positions: np.ndarray, theta: float) -> np.ndarray:
    """Rotate half-split dimension pairs of x[heads, seq, head_size] in place
    convention: dim i pairs with i + head_size/2."""
    heads, seq, hs = x.shape
    half = hs // 2
    inv_freq = theta ** (-np.arange(half, dtype=np.float64) * 2.0 / hs)
    ang = positions.astype(np.float64)[:, None] * inv_freq[None, :]  # [seq, half]
    cos = np.cos(ang)[None, :, :]
    sin = np.sin(ang)[None, :, :]
    x64 = x.astype(np.float64)
    x1 = x64[:, :, :half]
    x2 = x64[:, :, half:]
    out = np.empty_like(x64)
    out[:, :, :half] = x1 * cos - x2 * sin
    out[:, :, half:] = x1 * sin + x2 * cos
    return out.astype(np.float32)


def matmul_f32(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a[m,k] @ b[n,k].T with f32 BLAS."""
    return a @ b.T


def matmul_quant(a: np.ndarray, b: np.ndarray, dtype: QuantType, k: int) -> np.ndarray:
    """a[m,k] f32 times serialized quantized rows b[n, row_bytes]; f64 accumulate."""
    w = dequantize_rows(b, dtype, k)
    return (a.astype(np.float64) @ w.astype(np.float64).T).astype(np.float32)
