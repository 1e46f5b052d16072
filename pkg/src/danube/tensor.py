"""Dense tensors and the numeric ops the forward pass is built from.

Activations are always F32 numpy arrays; weights may additionally be F16
or block-quantized, carried as a `Tensor` wrapping the serialized bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError, ValidationError
from .quant import QuantType, dequantize_rows, quantize_rows, row_bytes


@dataclass
class Tensor:
    shape: tuple[int, ...]
    dtype: QuantType
    data: np.ndarray  # contiguous uint8 byte buffer

    def __post_init__(self) -> None:
        self.shape = tuple(int(d) for d in self.shape)
        if not self.shape or any(d < 1 for d in self.shape):
            raise ValidationError(f"invalid shape {self.shape}")
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8).reshape(-1)
        expect = self.nbytes_expected()
        if self.data.size != expect:
            raise ValidationError(
                f"{self.dtype.value}{list(self.shape)}: {self.data.size} bytes, expected {expect}"
            )

    def nbytes_expected(self) -> int:
        per_row = row_bytes(self.dtype, self.shape[-1])
        n_rows = 1
        for d in self.shape[:-1]:
            n_rows *= d
        return n_rows * per_row

    @property
    def n_elements(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n

    @classmethod
    def from_f32(cls, arr: np.ndarray, dtype: QuantType = QuantType.F32) -> "Tensor":
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        return cls(arr.shape, dtype, quantize_rows(arr, dtype).reshape(-1))

    def to_f32(self) -> np.ndarray:
        rows = self.data.reshape(-1, row_bytes(self.dtype, self.shape[-1]))
        return dequantize_rows(rows, self.dtype, self.shape[-1]).reshape(self.shape)

    def rows(self) -> np.ndarray:
        """Serialized bytes as [n_rows, row_bytes] (2-D tensors only)."""
        if len(self.shape) != 2:
            raise ShapeError(f"rows() needs a 2-D tensor, got {self.shape}")
        return self.data.reshape(self.shape[0], -1)


@dataclass(frozen=True)
class RopeParams:
    theta: float
    head_size: int

    def __post_init__(self) -> None:
        if self.theta <= 0:
            raise ConfigError(f"rope theta must be positive, got {self.theta}")
        if self.head_size <= 0 or self.head_size % 2 != 0:
            raise ConfigError(f"head size must be even and positive, got {self.head_size}")


def matmul(a: np.ndarray, b: Tensor) -> np.ndarray:
    """a[m,k] (F32) times weight rows b[n,k]; returns [m,n] F32.

    Weight rows may be F32, F16, Q8_0 or Q4_0; accumulation is at least F32
    with a fixed per-element reduction order.
    """
    a = np.ascontiguousarray(a, dtype=np.float32)
    if a.ndim != 2 or len(b.shape) != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    m, k = a.shape
    n, bk = b.shape
    if k != bk:
        raise ShapeError(f"inner dimensions differ: {k} vs {bk}")
    if b.dtype is QuantType.F32:
        return kernels.matmul_f32(a, b.to_f32())
    if b.dtype is QuantType.F16:
        return kernels.matmul_f32(a, b.to_f32())
    return kernels.matmul_quant(a, b.rows(), b.dtype, k)


def rms_norm(x: np.ndarray, weight: np.ndarray, eps: float) -> np.ndarray:
    if x.shape[-1] != weight.shape[-1]:
        raise ShapeError(
            f"rms_norm width {x.shape[-1]} does not match weight {weight.shape[-1]}"
        )
    return kernels.rms_norm(x, weight, eps)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    return kernels.softmax_rows(x)


def silu(x: np.ndarray) -> np.ndarray:
    return kernels.silu(x)


def rope_apply(x: np.ndarray, positions, params: RopeParams) -> np.ndarray:
    """Rotate x[heads, seq, head_size] by position-dependent angles.

    Half-split pairing: dimension i rotates with dimension i + head_size/2.
    """
    positions = np.asarray(positions, dtype=np.int64)
    if x.ndim != 3:
        raise ShapeError(f"rope input must be [heads, seq, head_size], got {x.shape}")
    if x.shape[2] != params.head_size:
        raise ConfigError(
            f"head size {x.shape[2]} does not match params {params.head_size}"
        )
    if positions.shape[0] != x.shape[1]:
        raise ShapeError("positions length must equal sequence length")
    return kernels.rope_rotate(x, positions, params.theta)
