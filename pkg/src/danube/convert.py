"""Whole-file re-quantization between codec formats."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import UnsupportedFormatError
from .gguf import (
    GGML_ID_FOR,
    GgufBuilder,
    GgufValue,
    GgufValueType,
    QUANT_FOR_ID,
    read_gguf,
)
from .quant import DEFAULT_POLICY, ENCODABLE, QuantPolicy, QuantType, dequantize_rows, quantize_rows, row_bytes


@dataclass
class QuantizeSummary:
    in_path: str
    out_path: str
    target: str
    in_bytes: int
    out_bytes: int
    tensors_quantized: int
    tensors_kept: int

    @property
    def ratio(self) -> float:
        return self.in_bytes / self.out_bytes

    def to_text(self) -> str:
        return "\n".join(
            [
                f"input:  {self.in_path} ({self.in_bytes / 1e9:.4f} GB)",
                f"output: {self.out_path} ({self.out_bytes / 1e9:.4f} GB)",
                f"target: {self.target}",
                f"tensors re-encoded: {self.tensors_quantized}, kept F32 (1-D): {self.tensors_kept}",
                f"size ratio: {self.ratio:.2f}x",
            ]
        )


def quantize_file(
    in_path: Union[str, Path],
    out_path: Union[str, Path],
    target: QuantType,
    policy: QuantPolicy = DEFAULT_POLICY,
) -> QuantizeSummary:
    """Re-encode every eligible weight tensor of a GGUF file.

    Row permutations are untouched: re-encoding is per row, so converter
    Q/K layouts survive unchanged. Metadata is carried over verbatim.
    """
    if target not in ENCODABLE:
        raise UnsupportedFormatError(
            f"cannot encode {target.value}; supported: "
            + ", ".join(t.value for t in ENCODABLE)
        )
    g = read_gguf(in_path)
    try:
        b = GgufBuilder(alignment=g.alignment)
        for key, value in g.metadata.items():
            if key == "general.alignment":
                continue  # builder already wrote it
            b.add_meta(key, value)
        b.add_meta("general.file_type", GgufValue(GgufValueType.UINT32, GGML_ID_FOR[target]))

        quantized = kept = 0
        for info in g.tensors:
            src = QUANT_FOR_ID.get(info.ggml_type)
            if src is None:
                raise UnsupportedFormatError(
                    f"tensor {info.name!r} is {info.type_name}; K-quant payloads "
                    "cannot be re-quantized"
                )
            # copy: a view would pin the source mmap open past close()
            data = np.array(g.tensor_data(info), dtype=np.uint8, copy=True)
            eff = policy.tensor_type(info.shape, target)
            if eff == src:
                b.add_tensor(info.name, src, info.shape, data)
                kept += 1 if eff is not target else 0
                quantized += 1 if eff is target else 0
                continue
            k = info.shape[-1]
            rows = dequantize_rows(data.reshape(-1, row_bytes(src, k)), src, k)
            b.add_tensor(info.name, eff, info.shape, quantize_rows(rows, eff))
            if eff is target:
                quantized += 1
            else:
                kept += 1
        b.write(out_path)
    finally:
        g.close()

    return QuantizeSummary(
        in_path=str(in_path),
        out_path=str(out_path),
        target=target.value,
        in_bytes=Path(in_path).stat().st_size,
        out_bytes=Path(out_path).stat().st_size,
        tensors_quantized=quantized,
        tensors_kept=kept,
    )
