"""Numba-jitted kernel implementations.

Wrappers parse serialized quantized rows into plain arrays (structured
dtypes are not supported inside nopython code) and hand off to @njit
kernels. Reduction order per output element is fixed (sequential over k,
blocks ascending), so results are bit-identical across thread counts.
"""

from __future__ import annotations

import numba
import numpy as np
from numba import njit, prange

from ..quant import BLOCK_Q4_0_DTYPE, BLOCK_Q8_0_DTYPE, QK, QuantType, dequantize_rows

NAME = "numba"


def set_num_threads(n: int) -> None:
    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


@njit(cache=True, parallel=True)
def _rms_norm(x, weight, eps, out):
    rows, dim = x.shape
    for i in prange(rows):
        ss = 0.0
        for j in range(dim):
            v = np.float64(x[i, j])
            ss += v * v
        scale = 1.0 / np.sqrt(ss / dim + eps)
        for j in range(dim):
            out[i, j] = np.float32(np.float64(x[i, j]) * scale * np.float64(weight[j]))


def rms_norm(x: np.ndarray, weight: np.ndarray, eps: float) -> np.ndarray:
    x2 = np.ascontiguousarray(x, dtype=np.float32).reshape(-1, x.shape[-1])
    out = np.empty_like(x2)
    _rms_norm(x2, np.ascontiguousarray(weight, dtype=np.float32), float(eps), out)
    return out.reshape(x.shape)


@njit(cache=True, parallel=True)
def _softmax_rows(x, out):
    rows, n = x.shape
    for i in prange(rows):
        m = -np.inf
        for j in range(n):
            if x[i, j] > m:
                m = x[i, j]
        if not np.isfinite(m):
            m = 0.0
        s = 0.0
        for j in range(n):
            e = np.exp(np.float64(x[i, j]) - m)
            out[i, j] = e
            s += e
        for j in range(n):
            out[i, j] = out[i, j] / s


def softmax_rows(x: np.ndarray) -> np.ndarray:
    x2 = np.ascontiguousarray(x, dtype=np.float32).reshape(-1, x.shape[-1])
    out = np.empty(x2.shape, dtype=np.float64)
    _softmax_rows(x2, out)
    return out.astype(np.float32).reshape(x.shape)


@njit(cache=True, parallel=True)
def _silu(x, out):
    for i in prange(x.shape[0]):
        v = np.float64(x[i])
        out[i] = np.float32(v / (1.0 + np.exp(-v)))


def silu(x: np.ndarray) -> np.ndarray:
    flat = np.ascontiguousarray(x, dtype=np.float32).reshape(-1)
    out = np.empty_like(flat)
    _silu(flat, out)
    return out.reshape(x.shape)


@njit(cache=True, parallel=True)
def _rope(x, positions, theta, out):
    heads, seq, hs = x.shape
    half = hs // 2
    for h in prange(heads):
        for s in range(seq):
            pos = np.float64(positions[s])
            for i in range(half):
                freq = theta ** (-2.0 * i / hs)
                ang = pos * freq
                c = np.cos(ang)
                sn = np.sin(ang)
                x1 = np.float64(x[h, s, i])
                x2 = np.float64(x[h, s, i + half])
                out[h, s, i] = np.float32(x1 * c - x2 * sn)
                out[h, s, i + half] = np.float32(x1 * sn + x2 * c)


def rope_rotate(x: np.ndarray, positions: np.ndarray, theta: float) -> np.ndarray:
    x3 = np.ascontiguousarray(x, dtype=np.float32)
    out = np.empty_like(x3)
    _rope(x3, np.ascontiguousarray(positions, dtype=np.int64), float(theta), out)
    return out


def matmul_f32(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # BLAS already saturates cores and is deterministic in-process
    return a @ b.T


@njit(cache=True, parallel=True)
def _matmul_blocks(a, scales, codes, out):
    """out[i,j] = sum_t a[i,t] * scales[j, t//32] * codes[j, t]."""
    m, k = a.shape
    n = scales.shape[0]
    nblocks = k // QK
    for j in prange(n):
        for i in range(m):
            acc = 0.0
            for blk in range(nblocks):
                d = np.float64(scales[j, blk])
                base = blk * QK
                for t in range(QK):
                    acc += np.float64(a[i, base + t]) * (d * codes[j, base + t])
            out[i, j] = np.float32(acc)


def _parse_q8_0(b: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    blocks = np.ascontiguousarray(b, dtype=np.uint8).reshape(-1).view(BLOCK_Q8_0_DTYPE)
    n = b.shape[0]
    scales = blocks["d"].astype(np.float32).reshape(n, k // QK)
    codes = blocks["qs"].astype(np.float64).reshape(n, k)
    return scales, codes


def _parse_q4_0(b: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    blocks = np.ascontiguousarray(b, dtype=np.uint8).reshape(-1).view(BLOCK_Q4_0_DTYPE)
    n = b.shape[0]
    scales = blocks["d"].astype(np.float32).reshape(n, k // QK)
    qs = blocks["qs"]
    lo = (qs & 0x0F).astype(np.int8) - 8
    hi = (qs >> 4).astype(np.int8) - 8
    codes = np.concatenate([lo, hi], axis=1).astype(np.float64).reshape(n, k)
    return scales, codes


def matmul_quant(a: np.ndarray, b: np.ndarray, dtype: QuantType, k: int) -> np.ndarray:
    a2 = np.ascontiguousarray(a, dtype=np.float32)
    if dtype is QuantType.Q8_0:
        scales, codes = _parse_q8_0(b, k)
    elif dtype is QuantType.Q4_0:
        scales, codes = _parse_q4_0(b, k)
    else:
        w = dequantize_rows(b, dtype, k)
        return (a2.astype(np.float64) @ w.astype(np.float64).T).astype(np.float32)
    out = np.empty((a2.shape[0], scales.shape[0]), dtype=np.float32)
    _matmul_blocks(a2, scales, codes, out)
    return out
