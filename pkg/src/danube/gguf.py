"""GGUF v3 container: bit-exact reader/writer plus model weight loading.

Layout: magic "GGUF", u32 version, u64 tensor count, u64 metadata count,
typed key-value section, tensor directory, then payload aligned to
``general.alignment`` (default 32). All integers little-endian.
"""

from __future__ import annotations

import mmap
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, BinaryIO, Optional, Union

import numpy as np

from .config import ModelConfig
from .errors import (
    CorruptionError,
    FormatError,
    SchemaError,
    UnsupportedFormatError,
    ValidationError,
    VersionError,
)
from .quant import QuantType, row_bytes
from .tensor import Tensor

MAGIC = b"GGUF"
SUPPORTED_VERSION = 3
DEFAULT_ALIGNMENT = 32


class GgufValueType(IntEnum):
    UINT8 = 0
    INT8 = 1
    UINT16 = 2
    INT16 = 3
    UINT32 = 4
    INT32 = 5
    FLOAT32 = 6
    BOOL = 7
    STRING = 8
    ARRAY = 9
    UINT64 = 10
    INT64 = 11
    FLOAT64 = 12


_SCALAR_FMT = {
    GgufValueType.UINT8: "<B",
    GgufValueType.INT8: "<b",
    GgufValueType.UINT16: "<H",
    GgufValueType.INT16: "<h",
    GgufValueType.UINT32: "<I",
    GgufValueType.INT32: "<i",
    GgufValueType.FLOAT32: "<f",
    GgufValueType.UINT64: "<Q",
    GgufValueType.INT64: "<q",
    GgufValueType.FLOAT64: "<d",
}

# ggml type id -> (name, elements per block, bytes per block)
GGML_TYPES = {
    0: ("F32", 1, 4),
    1: ("F16", 1, 2),
    2: ("Q4_0", 32, 18),
    8: ("Q8_0", 32, 34),
    10: ("Q2_K", 256, 84),
    11: ("Q3_K", 256, 110),
    12: ("Q4_K", 256, 144),
    13: ("Q5_K", 256, 176),
    14: ("Q6_K", 256, 210),
}

GGML_ID_FOR = {QuantType.F32: 0, QuantType.F16: 1, QuantType.Q4_0: 2, QuantType.Q8_0: 8}
QUANT_FOR_ID = {v: k for k, v in GGML_ID_FOR.items()}


@dataclass(frozen=True)
class GgufValue:
    type: GgufValueType
    value: Any  # scalar, str, or (elem_type, tuple) for arrays

    def python(self) -> Any:
        if self.type is GgufValueType.ARRAY:
            _, items = self.value
            return list(items)
        return self.value


@dataclass
class TensorInfo:
    name: str
    shape: tuple[int, ...]  # row-major, outermost first
    ggml_type: int
    offset: int

    @property
    def type_name(self) -> str:
        return GGML_TYPES[self.ggml_type][0]

    @property
    def dtype(self) -> Optional[QuantType]:
        """Engine codec type, or None for recognized-but-unsupported formats."""
        return QUANT_FOR_ID.get(self.ggml_type)

    @property
    def n_elements(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n

    @property
    def nbytes(self) -> int:
        _, per_block, block_bytes = GGML_TYPES[self.ggml_type]
        if self.shape[-1] % per_block != 0:
            raise FormatError(
                f"tensor {self.name!r}: innermost dim {self.shape[-1]} "
                f"not divisible by {self.type_name} block size {per_block}"
            )
        return self.n_elements // self.shape[-1] * (self.shape[-1] // per_block) * block_bytes


@dataclass
class GgufFile:
    version: int
    metadata: dict[str, GgufValue]
    tensors: list[TensorInfo]
    _payload: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    _mmap: Any = field(default=None, compare=False, repr=False)

    @property
    def alignment(self) -> int:
        v = self.get("general.alignment")
        return int(v) if v is not None else DEFAULT_ALIGNMENT

    def get(self, key: str, default: Any = None) -> Any:
        v = self.metadata.get(key)
        return default if v is None else v.python()

    def tensor(self, name: str) -> TensorInfo:
        for t in self.tensors:
            if t.name == name:
                return t
        raise KeyError(name)

    def tensor_data(self, info: Union[str, TensorInfo]) -> np.ndarray:
        if isinstance(info, str):
            info = self.tensor(info)
        if self._payload is None:
            raise ValidationError("file has no payload attached")
        return self._payload[info.offset : info.offset + info.nbytes]

    def payload_size(self) -> int:
        if not self.tensors:
            return 0
        return max(t.offset + t.nbytes for t in self.tensors)

    def close(self) -> None:
        self._payload = None
        if self._mmap is not None:
            try:
                self._mmap.close()
            except BufferError:
                # a caller still holds a tensor view; the mapping is released
                # when the last view is garbage-collected
                pass
            self._mmap = None


class _Cursor:
    """Bounds-checked little-endian reader over a byte buffer."""

    def __init__(self, buf) -> None:
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise CorruptionError(
                f"file truncated: need {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        out = bytes(self.buf[self.pos : self.pos + n])
        self.pos += n
        return out

    def scalar(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))[0]

    def u32(self) -> int:
        return self.scalar("<I")

    def u64(self) -> int:
        return self.scalar("<Q")

    def string(self) -> str:
        n = self.u64()
        raw = self.take(n)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorruptionError(f"invalid UTF-8 string at offset {self.pos - n}") from e


def _read_value(cur: _Cursor, vtype: int) -> GgufValue:
    try:
        t = GgufValueType(vtype)
    except ValueError:
        raise FormatError(f"unknown metadata value type {vtype} at offset {cur.pos}")
    if t is GgufValueType.STRING:
        return GgufValue(t, cur.string())
    if t is GgufValueType.BOOL:
        b = cur.take(1)[0]
        return GgufValue(t, bool(b))
    if t is GgufValueType.ARRAY:
        elem_raw = cur.u32()
        try:
            elem = GgufValueType(elem_raw)
        except ValueError:
            raise FormatError(f"unknown array element type {elem_raw} at offset {cur.pos}")
        if elem is GgufValueType.ARRAY:
            raise FormatError("nested arrays are not supported")
        count = cur.u64()
        items = []
        for _ in range(count):
            items.append(_read_value(cur, elem).value)
        return GgufValue(t, (elem, tuple(items)))
    return GgufValue(t, cur.scalar(_SCALAR_FMT[t]))


def _align_up(n: int, a: int) -> int:
    return (n + a - 1) // a * a


def read_gguf(source: Union[str, Path, bytes, bytearray]) -> GgufFile:
    """Parse and validate a GGUF file from a path or an in-memory buffer.

    Payload access is by region over an mmap (paths) or the given buffer;
    tensor bytes are never copied up front.
    """
    mm = None
    if isinstance(source, (str, Path)):
        with open(source, "rb") as f:
            try:
                mm = mmap.mmap(f.fileno(), 0, access=mmap.ACCESS_READ)
            except ValueError as e:  # empty file
                raise CorruptionError(f"cannot map {source}: {e}")
        buf = memoryview(mm)
    else:
        buf = memoryview(bytes(source))

    try:
        return _parse(buf, mm)
    except Exception:
        if mm is not None:
            mm.close()
        raise


def _parse(buf, mm) -> GgufFile:
    cur = _Cursor(buf)
    magic = cur.take(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = cur.u32()
    if version != SUPPORTED_VERSION:
        raise VersionError(
            f"unsupported GGUF version {version}; only v{SUPPORTED_VERSION} is supported"
        )
    n_tensors = cur.u64()
    n_kv = cur.u64()
    if n_tensors > 1_000_000 or n_kv > 1_000_000:
        raise CorruptionError(
            f"implausible counts (tensors={n_tensors}, kv={n_kv}) at offset 4"
        )

    metadata: dict[str, GgufValue] = {}
    for _ in range(n_kv):
        key = cur.string()
        if key in metadata:
            raise FormatError(f"duplicate metadata key {key!r}")
        vtype = cur.u32()
        metadata[key] = _read_value(cur, vtype)

    tensors: list[TensorInfo] = []
    names = set()
    for _ in range(n_tensors):
        name = cur.string()
        if name in names:
            raise FormatError(f"duplicate tensor name {name!r}")
        names.add(name)
        n_dims = cur.u32()
        if n_dims < 1 or n_dims > 4:
            raise CorruptionError(f"tensor {name!r}: implausible n_dims {n_dims}")
        # dims are stored innermost-first; expose row-major (outermost first)
        dims = tuple(cur.u64() for _ in range(n_dims))
        if any(d < 1 for d in dims):
            raise CorruptionError(f"tensor {name!r}: zero-sized dimension")
        ggml_type = cur.u32()
        if ggml_type not in GGML_TYPES:
            raise FormatError(f"tensor {name!r}: unknown ggml type id {ggml_type}")
        offset = cur.u64()
        tensors.append(TensorInfo(name, tuple(reversed(dims)), ggml_type, offset))

    g = GgufFile(version=version, metadata=metadata, tensors=tensors)
    alignment = g.alignment
    if alignment < 1 or alignment > 65536 or alignment & (alignment - 1):
        raise FormatError(f"invalid alignment {alignment}")
    data_start = _align_up(cur.pos, alignment)
    payload_len = len(buf) - data_start
    if payload_len < 0:
        raise CorruptionError("file ends before payload start")

    regions = []
    for t in tensors:
        size = t.nbytes  # raises FormatError on bad block divisibility
        if t.offset % alignment != 0:
            raise CorruptionError(
                f"tensor {t.name!r}: offset {t.offset} not aligned to {alignment}"
            )
        if t.offset + size > payload_len:
            raise CorruptionError(
                f"tensor {t.name!r}: region [{t.offset}, {t.offset + size}) "
                f"exceeds payload of {payload_len} bytes"
            )
        regions.append((t.offset, t.offset + size, t.name))
    regions.sort()
    for (s0, e0, n0), (s1, e1, n1) in zip(regions, regions[1:]):
        if s1 < e0:
            raise CorruptionError(f"tensors {n0!r} and {n1!r} overlap")

    g._payload = np.frombuffer(buf, dtype=np.uint8, offset=data_start)
    g._mmap = mm
    return g


# ---------------------------------------------------------------------------
# writing


def _infer_type(value: Any) -> GgufValue:
    if isinstance(value, GgufValue):
        return value
    if isinstance(value, bool):
        return GgufValue(GgufValueType.BOOL, value)
    if isinstance(value, int):
        if 0 <= value < 2**32:
            return GgufValue(GgufValueType.UINT32, value)
        return GgufValue(GgufValueType.INT64, value)
    if isinstance(value, float):
        return GgufValue(GgufValueType.FLOAT32, value)
    if isinstance(value, str):
        return GgufValue(GgufValueType.STRING, value)
    if isinstance(value, (list, tuple)):
        if all(isinstance(v, str) for v in value):
            et = GgufValueType.STRING
        elif all(isinstance(v, bool) for v in value):
            et = GgufValueType.BOOL
        elif all(isinstance(v, int) for v in value):
            et = GgufValueType.INT32
        else:
            et = GgufValueType.FLOAT32
        return GgufValue(GgufValueType.ARRAY, (et, tuple(value)))
    raise ValidationError(f"cannot infer metadata type for {type(value).__name__}")


def _write_value(out: bytearray, v: GgufValue) -> None:
    if v.type is GgufValueType.STRING:
        raw = v.value.encode("utf-8")
        out += struct.pack("<Q", len(raw)) + raw
    elif v.type is GgufValueType.BOOL:
        out += struct.pack("<B", 1 if v.value else 0)
    elif v.type is GgufValueType.ARRAY:
        elem, items = v.value
        out += struct.pack("<IQ", int(elem), len(items))
        for item in items:
            _write_value(out, GgufValue(elem, item))
    else:
        out += struct.pack(_SCALAR_FMT[v.type], v.value)


class GgufBuilder:
    """Assemble a GGUF file; tensor offsets follow insertion order, aligned."""

    def __init__(self, alignment: int = DEFAULT_ALIGNMENT) -> None:
        self.alignment = alignment
        self.metadata: dict[str, GgufValue] = {}
        if alignment != DEFAULT_ALIGNMENT:
            self.add_meta("general.alignment", alignment)
        self._tensors: list[tuple[str, tuple[int, ...], int, bytes]] = []

    def add_meta(self, key: str, value: Any, vtype: Optional[GgufValueType] = None) -> None:
        if vtype is not None and not isinstance(value, GgufValue):
            if vtype is GgufValueType.ARRAY:
                raise ValidationError("pass arrays as GgufValue or a plain list")
            value = GgufValue(vtype, value)
        self.metadata[key] = _infer_type(value)

    def add_tensor(
        self,
        name: str,
        dtype: Union[QuantType, int],
        shape: tuple[int, ...],
        data,
    ) -> None:
        ggml_type = GGML_ID_FOR[dtype] if isinstance(dtype, QuantType) else int(dtype)
        if isinstance(data, (bytes, bytearray, memoryview)):
            raw = bytes(data)
        else:
            raw = bytes(np.ascontiguousarray(data).view(np.uint8).reshape(-1))
        self._tensors.append((name, tuple(int(d) for d in shape), ggml_type, raw))

    def finish(self) -> GgufFile:
        infos: list[TensorInfo] = []
        payload = bytearray()
        for name, shape, ggml_type, raw in self._tensors:
            off = _align_up(len(payload), self.alignment)
            payload += b"\x00" * (off - len(payload))
            info = TensorInfo(name, shape, ggml_type, off)
            if info.nbytes != len(raw):
                raise ValidationError(
                    f"tensor {name!r}: {len(raw)} bytes, expected {info.nbytes}"
                )
            payload += raw
            infos.append(info)
        g = GgufFile(SUPPORTED_VERSION, dict(self.metadata), infos)
        g._payload = np.frombuffer(bytes(payload), dtype=np.uint8)
        return g

    def write(self, path: Union[str, Path]) -> GgufFile:
        g = self.finish()
        write_gguf(g, path)
        return g


def serialize_gguf(g: GgufFile) -> bytes:
    """Emit a GgufFile to bytes; re-reading yields an equal structure."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<IQQ", g.version, len(g.tensors), len(g.metadata))
    for key, value in g.metadata.items():
        raw = key.encode("utf-8")
        out += struct.pack("<Q", len(raw)) + raw
        out += struct.pack("<I", int(value.type))
        _write_value(out, value)
    seen = set()
    for t in g.tensors:
        if t.name in seen:
            raise ValidationError(f"duplicate tensor name {t.name!r}")
        seen.add(t.name)
        if t.offset % g.alignment != 0:
            raise ValidationError(f"tensor {t.name!r}: misaligned offset {t.offset}")
        raw = t.name.encode("utf-8")
        out += struct.pack("<Q", len(raw)) + raw
        dims = tuple(reversed(t.shape))
        out += struct.pack("<I", len(dims))
        for d in dims:
            out += struct.pack("<Q", d)
        out += struct.pack("<IQ", t.ggml_type, t.offset)
    data_start = _align_up(len(out), g.alignment)
    out += b"\x00" * (data_start - len(out))
    payload = bytearray(g.payload_size())
    for t in g.tensors:
        payload[t.offset : t.offset + t.nbytes] = bytes(g.tensor_data(t))
    out += payload
    return bytes(out)


def write_gguf(g: GgufFile, path: Union[str, Path, BinaryIO]) -> None:
    data = serialize_gguf(g)
    if hasattr(path, "write"):
        path.write(data)
    else:
        with open(path, "wb") as f:
            f.write(data)


# ---------------------------------------------------------------------------
# model loading

REQUIRED_KEYS = (
    "llama.block_count",
    "llama.embedding_length",
    "llama.feed_forward_length",
    "llama.attention.head_count",
    "llama.attention.head_count_kv",
    "llama.context_length",
    "llama.rope.freq_base",
)

TOKENIZER_KEYS = (
    "tokenizer.ggml.model",
    "tokenizer.ggml.tokens",
    "tokenizer.ggml.scores",
    "tokenizer.ggml.token_type",
    "tokenizer.ggml.bos_token_id",
    "tokenizer.ggml.eos_token_id",
)


@dataclass
class TokenizerData:
    model: str
    tokens: list[str]
    scores: list[float]
    token_types: list[int]
    bos_id: int
    eos_id: int
    chat_template: Optional[str] = None


def _interleave_index(n_rows: int, n_heads: int, inverse: bool) -> np.ndarray:
    """Row permutation between half-split and interleaved RoPE layouts.

    The standard checkpoint converter stores Q/K rows interleaved; the
    engine works half-split, so loads apply the inverse mapping.
    """
    hd = n_rows // n_heads
    half = hd // 2
    idx = np.empty(n_rows, dtype=np.int64)
    for h in range(n_heads):
        base = h * hd
        for i in range(half):
            for j in range(2):
                if inverse:
                    idx[base + j * half + i] = base + 2 * i + j
                else:
                    idx[base + 2 * i + j] = base + j * half + i
    return idx


def permute_qk_rows(data: np.ndarray, n_rows: int, n_heads: int, inverse: bool) -> np.ndarray:
    rows = data.reshape(n_rows, -1)
    return rows[_interleave_index(n_rows, n_heads, inverse)].reshape(-1)


def read_config(g: GgufFile) -> ModelConfig:
    for key in REQUIRED_KEYS:
        if g.get(key) is None:
            raise SchemaError(f"missing required metadata key {key!r}")
    n_heads = int(g.get("llama.attention.head_count"))
    hidden = int(g.get("llama.embedding_length"))
    head_size = int(g.get("llama.attention.key_length", hidden // n_heads))
    tokens = g.get("tokenizer.ggml.tokens")
    vocab = int(g.get("llama.vocab_size", len(tokens) if tokens else 0))
    if vocab <= 0:
        raise SchemaError("cannot determine vocab size from metadata")
    tied = not any(t.name == "output.weight" for t in g.tensors)
    return ModelConfig(
        n_layers=int(g.get("llama.block_count")),
        hidden_size=hidden,
        intermediate_size=int(g.get("llama.feed_forward_length")),
        n_heads=n_heads,
        n_kv_heads=int(g.get("llama.attention.head_count_kv")),
        head_size=head_size,
        vocab_size=vocab,
        rope_theta=float(g.get("llama.rope.freq_base")),
        max_context=int(g.get("llama.context_length")),
        rms_eps=float(g.get("llama.attention.layer_norm_rms_epsilon", 1e-5)),
        tied_embeddings=tied,
    )


def read_tokenizer(g: GgufFile) -> TokenizerData:
    for key in TOKENIZER_KEYS:
        if g.get(key) is None:
            raise SchemaError(f"missing required tokenizer metadata key {key!r}")
    return TokenizerData(
        model=g.get("tokenizer.ggml.model"),
        tokens=list(g.get("tokenizer.ggml.tokens")),
        scores=[float(s) for s in g.get("tokenizer.ggml.scores")],
        token_types=[int(t) for t in g.get("tokenizer.ggml.token_type")],
        bos_id=int(g.get("tokenizer.ggml.bos_token_id")),
        eos_id=int(g.get("tokenizer.ggml.eos_token_id")),
        chat_template=g.get("tokenizer.chat_template"),
    )


def load_model_weights(g: GgufFile) -> tuple[ModelConfig, dict[str, Tensor], TokenizerData]:
    """Map a parsed llama-architecture file to engine tensors.

    Q/K projection rows are un-permuted into the engine's half-split RoPE
    convention (a pure row reorder, so it works on quantized payloads too).
    """
    arch = g.get("general.architecture")
    if arch != "llama":
        raise SchemaError(f"unsupported architecture {arch!r}, expected 'llama'")
    config = read_config(g)
    tokenizer = read_tokenizer(g)
    if len(tokenizer.tokens) != config.vocab_size:
        raise ValidationError(
            f"tokenizer has {len(tokenizer.tokens)} tokens, config says {config.vocab_size}"
        )

    expected = dict(config.weight_shapes())
    weights: dict[str, Tensor] = {}
    for info in g.tensors:
        if info.name.endswith(".bias"):
            raise ValidationError(f"unexpected bias tensor {info.name!r}")
        if info.name not in expected:
            raise ValidationError(f"unknown tensor {info.name!r} for llama architecture")
        if info.dtype is None:
            raise UnsupportedFormatError(
                f"tensor {info.name!r} uses {info.type_name}; K-quant payloads are "
                "not supported — re-quantize to Q8_0 or Q4_0"
            )
        if info.shape != expected[info.name]:
            raise ValidationError(
                f"tensor {info.name!r}: shape {info.shape} does not match "
                f"config-implied {expected[info.name]}"
            )
        # copy out of any mmap so the file can be closed independently
        data = np.array(g.tensor_data(info), dtype=np.uint8, copy=True)
        base = info.name.rsplit(".", 1)[0]
        if base.endswith("attn_q"):
            data = permute_qk_rows(data, info.shape[0], config.n_heads, inverse=True)
        elif base.endswith("attn_k"):
            data = permute_qk_rows(data, info.shape[0], config.n_kv_heads, inverse=True)
        weights[info.name] = Tensor(info.shape, info.dtype, data)

    missing = sorted(set(expected) - set(weights))
    if missing:
        raise ValidationError(f"missing tensors: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    return config, weights, tokenizer


def add_config_meta(b: GgufBuilder, config: ModelConfig, name: str = "danube3") -> None:
    b.add_meta("general.architecture", "llama")
    b.add_meta("general.name", name)
    b.add_meta("llama.block_count", config.n_layers)
    b.add_meta("llama.embedding_length", config.hidden_size)
    b.add_meta("llama.feed_forward_length", config.intermediate_size)
    b.add_meta("llama.attention.head_count", config.n_heads)
    b.add_meta("llama.attention.head_count_kv", config.n_kv_heads)
    b.add_meta("llama.attention.key_length", config.head_size)
    b.add_meta("llama.context_length", config.max_context)
    b.add_meta("llama.rope.freq_base", float(config.rope_theta))
    b.add_meta("llama.attention.layer_norm_rms_epsilon", float(config.rms_eps))
    b.add_meta("llama.vocab_size", config.vocab_size)


def add_tokenizer_meta(b: GgufBuilder, tok: TokenizerData) -> None:
    b.add_meta("tokenizer.ggml.model", tok.model)
    b.add_meta(
        "tokenizer.ggml.tokens",
        GgufValue(GgufValueType.ARRAY, (GgufValueType.STRING, tuple(tok.tokens))),
    )
    b.add_meta(
        "tokenizer.ggml.scores",
        GgufValue(GgufValueType.ARRAY, (GgufValueType.FLOAT32, tuple(tok.scores))),
    )
    b.add_meta(
        "tokenizer.ggml.token_type",
        GgufValue(GgufValueType.ARRAY, (GgufValueType.INT32, tuple(tok.token_types))),
    )
    b.add_meta("tokenizer.ggml.bos_token_id", tok.bos_id)
    b.add_meta("tokenizer.ggml.eos_token_id", tok.eos_id)
    if tok.chat_template is not None:
        b.add_meta("tokenizer.chat_template", tok.chat_template)


def write_model_gguf(
    config: ModelConfig,
    weights: dict[str, np.ndarray],
    tokenizer: TokenizerData,
    path: Union[str, Path],
    dtype: QuantType = QuantType.F32,
    policy=None,
    name: str = "danube3",
) -> GgufFile:
    """Serialize engine-convention F32 weights to an ecosystem-compatible file.

    Q/K rows are forward-permuted into the converter's interleaved layout so
    the file round-trips through load_model_weights.
    """
    from .quant import DEFAULT_POLICY, quantize_rows

    if policy is None:
        policy = DEFAULT_POLICY
    b = GgufBuilder()
    add_config_meta(b, config, name=name)
    add_tokenizer_meta(b, tokenizer)
    b.add_meta("general.file_type", GGML_ID_FOR[dtype])
    for tname, shape in config.weight_shapes():
        arr = np.ascontiguousarray(weights[tname], dtype=np.float32)
        if arr.shape != shape:
            raise ValidationError(f"tensor {tname!r}: shape {arr.shape}, expected {shape}")
        target = policy.tensor_type(shape, dtype)
        raw = quantize_rows(arr, target).reshape(-1).view(np.uint8)
        base = tname.rsplit(".", 1)[0]
        if base.endswith("attn_q"):
            raw = permute_qk_rows(raw, shape[0], config.n_heads, inverse=False)
        elif base.endswith("attn_k"):
            raw = permute_qk_rows(raw, shape[0], config.n_kv_heads, inverse=False)
        b.add_tensor(tname, target, shape, raw)
    return b.write(path)
