"""Shared fixtures-in-code: synthetic vocabularies and tiny random models."""

from __future__ import annotations

import numpy as np

from danube.config import ModelConfig
from danube.quant import QuantType
from danube.runtime import Model
from danube.tensor import Tensor
from danube.tokenizer import TokenType, Vocabulary

CHAT_MARKERS = ("<|system|>", "<|prompt|>", "</s>", "<|answer|>")

# prefix-stable: every turn ends with a marker, assistant turns close with </s>
TEST_CHAT_TEMPLATE = (
    "{% for m in messages %}"
    "{% if m.role == 'system' %}<|system|>{{ m.content }}</s>"
    "{% elif m.role == 'user' %}<|prompt|>{{ m.content }}</s>"
    "{% else %}<|answer|>{{ m.content }}</s>{% endif %}"
    "{% endfor %}"
    "{% if add_generation_prompt %}<|answer|>{% endif %}"
)

MERGE_PIECES = {
    # piece: score (higher merges first)
    "▁t": -3.0,
    "▁a": -3.2,
    "▁w": -3.5,
    "▁h": -3.6,
    "he": -2.0,
    "th": -2.5,
    "er": -2.8,
    "in": -2.9,
    "ll": -3.1,
    "lo": -3.3,
    "or": -3.4,
    "an": -3.7,
    "▁the": -1.0,
    "▁and": -1.5,
    "▁to": -1.8,
    "ell": -2.2,
    "ello": -2.1,
    "▁hello": -0.8,
    "▁world": -0.9,
    "orld": -2.3,
    "▁wor": -2.4,
    "ing": -1.9,
}


def build_test_vocab(chat_template: str | None = TEST_CHAT_TEMPLATE) -> Vocabulary:
    tokens: list[str] = ["<unk>", "<s>", "</s>"]
    types: list[TokenType] = [TokenType.UNKNOWN, TokenType.CONTROL, TokenType.CONTROL]
    scores: list[float] = [0.0, 0.0, 0.0]

    for b in range(256):
        tokens.append(f"<0x{b:02X}>")
        types.append(TokenType.BYTE)
        scores.append(0.0)

    for marker in ("<|system|>", "<|prompt|>", "<|answer|>"):
        tokens.append(marker)
        types.append(TokenType.CONTROL)
        scores.append(0.0)

    singles = ["▁"] + [chr(c) for c in range(0x21, 0x7F)]
    for ch in singles:
        tokens.append(ch)
        types.append(TokenType.NORMAL)
        scores.append(-10.0)

    for piece, score in MERGE_PIECES.items():
        tokens.append(piece)
        types.append(TokenType.NORMAL)
        scores.append(score)

    return Vocabulary(
        tokens=tokens,
        scores=scores,
        types=types,
        bos_id=1,
        eos_id=2,
        chat_template=chat_template,
    )


VOCAB_SIZE = len(build_test_vocab().tokens)

TINY_CONFIG = ModelConfig(
    n_layers=2,
    hidden_size=8,
    intermediate_size=16,
    n_heads=2,
    n_kv_heads=1,
    head_size=4,
    vocab_size=VOCAB_SIZE,
    rope_theta=1000.0,
    max_context=128,
    rms_eps=1e-5,
)


# like TINY_CONFIG but with rows wide enough for 32-element quant blocks
QUANT_CONFIG = ModelConfig(
    n_layers=2,
    hidden_size=32,
    intermediate_size=64,
    n_heads=2,
    n_kv_heads=1,
    head_size=16,
    vocab_size=VOCAB_SIZE,
    rope_theta=1000.0,
    max_context=128,
    rms_eps=1e-5,
)


def random_weights(config: ModelConfig, seed: int = 0, scale: float = 0.3):
    rng = np.random.default_rng(seed)
    return {
        name: (rng.standard_normal(shape) * scale).astype(np.float32)
        for name, shape in config.weight_shapes()
    }


def tiny_model(
    config: ModelConfig = TINY_CONFIG,
    seed: int = 0,
    dtype: QuantType = QuantType.F32,
) -> tuple[Model, dict[str, np.ndarray]]:
    raw = random_weights(config, seed=seed)
    tensors = {}
    for name, arr in raw.items():
        t = dtype if arr.ndim == 2 else QuantType.F32
        tensors[name] = Tensor.from_f32(arr, t)
    return Model.from_weights(config, tensors, name="tiny-test"), raw
