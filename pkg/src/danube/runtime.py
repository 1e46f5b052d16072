"""Danube3 decoder forward pass with grouped-query attention and KV cache."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .config import ModelConfig
from .errors import CapacityError, InputError, ShapeError
from .gguf import GgufFile, TokenizerData, load_model_weights, read_gguf
from .quant import QuantType
from .tensor import RopeParams, Tensor, matmul, rms_norm, rope_apply, silu, softmax_rows


@dataclass
class LayerWeights:
    attn_norm: np.ndarray  # F32 [hidden]
    wq: Tensor  # [n_heads*head_size, hidden]
    wk: Tensor  # [n_kv_heads*head_size, hidden]
    wv: Tensor  # [n_kv_heads*head_size, hidden]
    wo: Tensor  # [hidden, n_heads*head_size]
    ffn_norm: np.ndarray  # F32 [hidden]
    w_gate: Tensor  # [intermediate, hidden]
    w_up: Tensor  # [intermediate, hidden]
    w_down: Tensor  # [hidden, intermediate]


class KvCache:
    """Per-session rolling K/V store; append-only per decode step."""

    def __init__(self, config: ModelConfig, max_context: Optional[int] = None) -> None:
        self.max_context = max_context or config.max_context
        shape = (config.n_layers, config.n_kv_heads, self.max_context, config.head_size)
        self.k = np.zeros(shape, dtype=np.float32)
        self.v = np.zeros(shape, dtype=np.float32)
        self.length = 0

    def reset(self) -> None:
        self.length = 0

    def truncate(self, length: int) -> None:
        if not 0 <= length <= self.length:
            raise ValueError(f"cannot truncate to {length} (have {self.length})")
        self.length = length

    def append(self, layer: int, k: np.ndarray, v: np.ndarray) -> None:
        seq = k.shape[1]
        if self.length + seq > self.max_context:
            raise CapacityError(
                f"context overflow: {self.length} + {seq} > {self.max_context}"
            )
        self.k[layer, :, self.length : self.length + seq] = k
        self.v[layer, :, self.length : self.length + seq] = v

    def commit(self, seq: int) -> None:
        self.length += seq


@dataclass
class Model:
    config: ModelConfig
    tok_embd: Tensor  # [vocab, hidden]
    layers: list[LayerWeights]
    out_norm: np.ndarray  # F32 [hidden]
    output: Optional[Tensor]  # None when embeddings are tied
    name: str = "danube3"
    weight_type: QuantType = QuantType.F32

    def new_cache(self, max_context: Optional[int] = None) -> KvCache:
        return KvCache(self.config, max_context)

    @classmethod
    def from_weights(
        cls,
        config: ModelConfig,
        weights: dict[str, Tensor],
        name: str = "danube3",
    ) -> "Model":
        layers = []
        for i in range(config.n_layers):
            p = f"blk.{i}."
            layers.append(
                LayerWeights(
                    attn_norm=weights[p + "attn_norm.weight"].to_f32(),
                    wq=weights[p + "attn_q.weight"],
                    wk=weights[p + "attn_k.weight"],
                    wv=weights[p + "attn_v.weight"],
                    wo=weights[p + "attn_output.weight"],
                    ffn_norm=weights[p + "ffn_norm.weight"].to_f32(),
                    w_gate=weights[p + "ffn_gate.weight"],
                    w_up=weights[p + "ffn_up.weight"],
                    w_down=weights[p + "ffn_down.weight"],
                )
            )
        wtype = max(
            (w.dtype for w in weights.values() if len(w.shape) == 2),
            key=lambda d: 0 if d is QuantType.F32 else 1,
        )
        return cls(
            config=config,
            tok_embd=weights["token_embd.weight"],
            layers=layers,
            out_norm=weights["output_norm.weight"].to_f32(),
            output=weights.get("output.weight"),
            name=name,
            weight_type=wtype,
        )

    @classmethod
    def from_gguf(cls, source: Union[str, GgufFile]) -> tuple["Model", TokenizerData]:
        g = read_gguf(source) if not isinstance(source, GgufFile) else source
        config, weights, tok = load_model_weights(g)
        name = g.get("general.name", "danube3")
        return cls.from_weights(config, weights, name=name), tok


def attention_block(
    x: np.ndarray,
    layer: LayerWeights,
    cache: KvCache,
    layer_index: int,
    positions: np.ndarray,
    config: ModelConfig,
) -> np.ndarray:
    """GQA attention over cached plus new positions, causal within the new span."""
    seq = x.shape[0]
    hs = config.head_size
    rope = RopeParams(config.rope_theta, hs)

    q = matmul(x, layer.wq).reshape(seq, config.n_heads, hs).transpose(1, 0, 2)
    k = matmul(x, layer.wk).reshape(seq, config.n_kv_heads, hs).transpose(1, 0, 2)
    v = matmul(x, layer.wv).reshape(seq, config.n_kv_heads, hs).transpose(1, 0, 2)

    q = rope_apply(q, positions, rope)
    k = rope_apply(k, positions, rope)

    cache.append(layer_index, k, v)
    total = cache.length + seq
    keys = cache.k[layer_index, :, :total]  # [n_kv, total, hs]
    vals = cache.v[layer_index, :, :total]

    group = config.group_size
    # [n_kv, group, seq, hs] x [n_kv, total, hs] -> scores [n_kv, group, seq, total]
    qg = q.reshape(config.n_kv_heads, group, seq, hs)
    scores = np.einsum("kgsh,kth->kgst", qg, keys, optimize=True) / np.sqrt(hs)
    key_pos = np.arange(total)
    mask = key_pos[None, :] > positions[:, None]  # [seq, total]
    scores = np.where(mask[None, None], -np.inf, scores).astype(np.float32)
    probs = softmax_rows(scores)
    out = np.einsum("kgst,kth->kgsh", probs, vals, optimize=True).astype(np.float32)
    out = out.reshape(config.n_heads, seq, hs).transpose(1, 0, 2).reshape(seq, -1)
    return matmul(out, layer.wo)


def mlp_block(x: np.ndarray, layer: LayerWeights) -> np.ndarray:
    gate = silu(matmul(x, layer.w_gate))
    up = matmul(x, layer.w_up)
    return matmul(gate * up, layer.w_down)


def forward(model: Model, tokens: Sequence[int], cache: KvCache) -> np.ndarray:
    """Run the decoder over new tokens; returns logits [seq, vocab]."""
    config = model.config
    ids = np.asarray(list(tokens), dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ShapeError("forward needs a non-empty 1-D token sequence")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise InputError(f"token id out of range [0, {config.vocab_size})")
    seq = ids.size
    if cache.length + seq > cache.max_context:
        raise CapacityError(
            f"context overflow: {cache.length} + {seq} > {cache.max_context}"
        )
    positions = cache.length + np.arange(seq, dtype=np.int64)

    embd_rows = model.tok_embd.rows()[ids]
    x = Tensor((seq, config.hidden_size), model.tok_embd.dtype, embd_rows).to_f32()

    for i, layer in enumerate(model.layers):
        x = x + attention_block(
            rms_norm(x, layer.attn_norm, config.rms_eps), layer, cache, i, positions, config
        )
        x = x + mlp_block(rms_norm(x, layer.ffn_norm, config.rms_eps), layer)
    cache.commit(seq)

    x = rms_norm(x, model.out_norm, config.rms_eps)
    head = model.output if model.output is not None else model.tok_embd
    return matmul(x, head)
