"""Block weight quantization: Q8_0 / Q4_0 codecs and size accounting.

Blocks hold 32 weights sharing one little-endian F16 scale. Q8_0 stores
signed 8-bit codes (34 bytes per block), Q4_0 packs two 4-bit codes per
byte around a zero point of 8 (18 bytes per block).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import ModelConfig
from .errors import FormatError, NumericError, ShapeError, UnsupportedFormatError

QK = 32  # weights per quantization block


class QuantType(Enum):
    F32 = "F32"
    F16 = "F16"
    Q8_0 = "Q8_0"
    Q4_0 = "Q4_0"
    # size-accounting-only entries (no codec)
    Q6_K = "Q6_K"
    Q5_K_M = "Q5_K_M"
    Q4_K_M = "Q4_K_M"
    Q3_K_M = "Q3_K_M"
    Q2_K = "Q2_K"


# tag -> (elements per block, bytes per block)
BLOCK_LAYOUT = {
    QuantType.F32: (1, 4),
    QuantType.F16: (1, 2),
    QuantType.Q8_0: (QK, 34),
    QuantType.Q4_0: (QK, 18),
}

# Effective bits per weight for size accounting. Codec formats follow from
# their block layouts; the K-quant entries are mixed-precision recipes, so
# their figures are the published effective rates for this model family.
ACCOUNTING_BITS = {
    QuantType.F32: 32.0,
    QuantType.F16: 16.0,
    QuantType.Q8_0: 34 * 8 / 32,  # 8.5
    QuantType.Q4_0: 18 * 8 / 32,  # 4.5
    QuantType.Q6_K: 6.5625,
    QuantType.Q5_K_M: 5.68,
    QuantType.Q4_K_M: 4.83,
    QuantType.Q3_K_M: 3.91,
    QuantType.Q2_K: 3.05,
}

ENCODABLE = (QuantType.F32, QuantType.F16, QuantType.Q8_0, QuantType.Q4_0)

BLOCK_Q8_0_DTYPE = np.dtype([("d", "<f2"), ("qs", "i1", (QK,))])
BLOCK_Q4_0_DTYPE = np.dtype([("d", "<f2"), ("qs", "u1", (QK // 2,))])

assert BLOCK_Q8_0_DTYPE.itemsize == 34
assert BLOCK_Q4_0_DTYPE.itemsize == 18


def row_bytes(dtype: QuantType, k: int) -> int:
    """Serialized size of one k-element row."""
    if dtype not in BLOCK_LAYOUT:
        raise UnsupportedFormatError(f"{dtype.value} has no codec layout")
    per_block, nbytes = BLOCK_LAYOUT[dtype]
    if k % per_block != 0:
        raise FormatError(
            f"row length {k} not divisible by {dtype.value} block size {per_block}"
        )
    return k // per_block * nbytes


def _round_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest, ties away from zero (np.round rounds ties to even)."""
    a = np.abs(x)
    floored = np.floor(a)
    rounded = floored + np.floor(2 * (a - floored))
    return np.sign(x) * rounded


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError("quantization input contains non-finite values")


def quantize_rows_q8_0(x: np.ndarray) -> np.ndarray:
    """Encode rows of F32 values to Q8_0 bytes.

    x: float32 array (..., k) with k % 32 == 0. Returns uint8 (..., k/32*34).
    """
    x = np.ascontiguousarray(x, dtype=np.float32)
    _check_finite(x)
    if x.shape[-1] % QK != 0:
        raise FormatError(f"row length {x.shape[-1]} not divisible by {QK}")
    lead = x.shape[:-1]
    blocks = x.reshape(-1, QK)
    amax = np.abs(blocks).max(axis=1)
    d = (amax / 127.0).astype(np.float16)
    d32 = d.astype(np.float32)
    inv = np.where(d32 != 0.0, np.divide(1.0, d32, where=d32 != 0.0), 0.0)
    qs = np.clip(_round_away(blocks * inv[:, None]), -127, 127).astype(np.int8)
    out = np.empty(blocks.shape[0], dtype=BLOCK_Q8_0_DTYPE)
    out["d"] = d
    out["qs"] = qs
    return out.view(np.uint8).reshape(*lead, -1)


def quantize_rows_q4_0(x: np.ndarray) -> np.ndarray:
    """Encode rows of F32 values to Q4_0 bytes.

    The scale is max-magnitude / -8 so the extreme element lands exactly on
    a code; codes are clamped to [0, 15].
    """
    x = np.ascontiguousarray(x, dtype=np.float32)
    _check_finite(x)
    if x.shape[-1] % QK != 0:
        raise FormatError(f"row length {x.shape[-1]} not divisible by {QK}")
    lead = x.shape[:-1]
    blocks = x.reshape(-1, QK)
    idx = np.argmax(np.abs(blocks), axis=1)
    m = blocks[np.arange(blocks.shape[0]), idx]
    d = (m / -8.0).astype(np.float16)
    d32 = d.astype(np.float32)
    inv = np.where(d32 != 0.0, np.divide(1.0, d32, where=d32 != 0.0), 0.0)
    codes = np.clip(_round_away(blocks * inv[:, None]) + 8, 0, 15).astype(np.uint8)
    packed = codes[:, :16] | (codes[:, 16:] << 4)
    out = np.empty(blocks.shape[0], dtype=BLOCK_Q4_0_DTYPE)
    out["d"] = d
    out["qs"] = packed
    return out.view(np.uint8).reshape(*lead, -1)


def dequantize_rows(buf: np.ndarray, dtype: QuantType, k: int) -> np.ndarray:
    """Decode serialized rows back to F32. buf: uint8 (..., row_bytes)."""
    buf = np.ascontiguousarray(buf, dtype=np.uint8)
    expect = row_bytes(dtype, k)
    if buf.shape[-1] != expect:
        raise FormatError(
            f"row of {buf.shape[-1]} bytes, expected {expect} for {dtype.value}[{k}]"
        )
    lead = buf.shape[:-1]
    flat = buf.reshape(-1, expect)
    if dtype is QuantType.F32:
        return flat.view("<f4").reshape(*lead, k).astype(np.float32)
    if dtype is QuantType.F16:
        return flat.view("<f2").astype(np.float32).reshape(*lead, k)
    if dtype is QuantType.Q8_0:
        blocks = flat.reshape(-1).view(BLOCK_Q8_0_DTYPE)
        vals = blocks["d"].astype(np.float32)[:, None] * blocks["qs"].astype(np.float32)
        return vals.reshape(*lead, k)
    if dtype is QuantType.Q4_0:
        blocks = flat.reshape(-1).view(BLOCK_Q4_0_DTYPE)
        d = blocks["d"].astype(np.float32)[:, None]
        qs = blocks["qs"]
        lo = (qs & 0x0F).astype(np.int16) - 8
        hi = (qs >> 4).astype(np.int16) - 8
        vals = np.concatenate([lo, hi], axis=1).astype(np.float32) * d
        return vals.reshape(*lead, k)
    raise UnsupportedFormatError(f"{dtype.value} decode is not supported")


def quantize_rows(x: np.ndarray, dtype: QuantType) -> np.ndarray:
    """Encode F32 rows into the serialized layout of any codec format."""
    if dtype is QuantType.F32:
        out = np.ascontiguousarray(x, dtype=np.float32)
        return out.view(np.uint8).reshape(*x.shape[:-1], -1)
    if dtype is QuantType.F16:
        out = np.ascontiguousarray(x, dtype=np.float32).astype("<f2")
        return out.view(np.uint8).reshape(*x.shape[:-1], -1)
    if dtype is QuantType.Q8_0:
        return quantize_rows_q8_0(x)
    if dtype is QuantType.Q4_0:
        return quantize_rows_q4_0(x)
    raise UnsupportedFormatError(f"{dtype.value} encode is not supported")


def vec_dot_quant(a: np.ndarray, b: np.ndarray, dtype: QuantType) -> float:
    """Dot product of an F32 vector with one serialized quantized row."""
    from . import kernels

    a = np.ascontiguousarray(a, dtype=np.float32)
    k = a.shape[-1]
    if b.shape[-1] != row_bytes(dtype, k):
        raise ShapeError(
            f"quantized row is {b.shape[-1]} bytes, expected {row_bytes(dtype, k)}"
        )
    out = kernels.matmul_quant(a.reshape(1, k), b.reshape(1, -1), dtype, k)
    return float(out[0, 0])


@dataclass(frozen=True)
class QuantPolicy:
    """Which tensors keep full precision when a model is quantized.

    ``uniform`` policies count every weight at the target rate; the default
    keeps 1-D tensors (norm gains) at F32, matching the quantize tool.
    """

    keep_1d_f32: bool = True

    def tensor_type(self, shape: tuple[int, ...], target: QuantType) -> QuantType:
        if self.keep_1d_f32 and len(shape) == 1:
            return QuantType.F32
        return target


UNIFORM_POLICY = QuantPolicy(keep_1d_f32=False)
DEFAULT_POLICY = QuantPolicy()

# per-tensor directory entry: name, dims, type, offset; plus alignment padding
_TENSOR_OVERHEAD = 96
_HEADER_OVERHEAD = 8192


def predict_model_size(
    config: ModelConfig,
    dtype: QuantType,
    policy: QuantPolicy = UNIFORM_POLICY,
) -> int:
    """Predicted serialized model size in bytes for a quantization target."""
    payload = 0.0
    n_tensors = 0
    for _, shape in config.weight_shapes():
        n_tensors += 1
        elems = 1
        for d in shape:
            elems *= d
        eff = policy.tensor_type(shape, dtype)
        payload += elems * ACCOUNTING_BITS[eff] / 8.0
    overhead = _HEADER_OVERHEAD + n_tensors * _TENSOR_OVERHEAD
    return int(round(payload + overhead))
