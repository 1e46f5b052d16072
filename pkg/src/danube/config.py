"""Model hyperparameters and parameter accounting for the Danube3 family."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    hidden_size: int
    intermediate_size: int
    n_heads: int
    n_kv_heads: int
    head_size: int
    vocab_size: int
    rope_theta: float
    max_context: int
    rms_eps: float = 1e-5
    tied_embeddings: bool = False

    def __post_init__(self) -> None:
        if self.n_kv_heads <= 0 or self.n_heads <= 0:
            raise ConfigError("head counts must be positive")
        if self.n_kv_heads > self.n_heads:
            raise ConfigError(
                f"kv heads ({self.n_kv_heads}) cannot exceed heads ({self.n_heads})"
            )
        if self.n_heads % self.n_kv_heads != 0:
            raise ConfigError(
                f"heads ({self.n_heads}) not divisible by kv heads ({self.n_kv_heads})"
            )
        if self.head_size % 2 != 0:
            raise ConfigError(f"head size must be even, got {self.head_size}")
        for name in ("n_layers", "hidden_size", "intermediate_size", "vocab_size",
                     "head_size", "max_context"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.rope_theta <= 0:
            raise ConfigError("rope_theta must be positive")

    @property
    def group_size(self) -> int:
        return self.n_heads // self.n_kv_heads

    @property
    def attn_width(self) -> int:
        return self.n_heads * self.head_size

    @property
    def kv_width(self) -> int:
        return self.n_kv_heads * self.head_size

    def weight_shapes(self) -> Iterator[tuple[str, tuple[int, ...]]]:
        """Yield (name, shape) for every weight tensor, GGUF naming scheme.

        Shapes are row-major [out, in] for matrices.
        """
        yield "token_embd.weight", (self.vocab_size, self.hidden_size)
        for i in range(self.n_layers):
            p = f"blk.{i}."
            yield p + "attn_norm.weight", (self.hidden_size,)
            yield p + "attn_q.weight", (self.attn_width, self.hidden_size)
            yield p + "attn_k.weight", (self.kv_width, self.hidden_size)
            yield p + "attn_v.weight", (self.kv_width, self.hidden_size)
            yield p + "attn_output.weight", (self.hidden_size, self.attn_width)
            yield p + "ffn_norm.weight", (self.hidden_size,)
            yield p + "ffn_gate.weight", (self.intermediate_size, self.hidden_size)
            yield p + "ffn_up.weight", (self.intermediate_size, self.hidden_size)
            yield p + "ffn_down.weight", (self.hidden_size, self.intermediate_size)
        yield "output_norm.weight", (self.hidden_size,)
        if not self.tied_embeddings:
            yield "output.weight", (self.vocab_size, self.hidden_size)


def count_parameters(config: ModelConfig) -> int:
    """Total trainable parameters, summed tensor by tensor."""
    total = 0
    for _, shape in config.weight_shapes():
        n = 1
        for d in shape:
            n *= d
        total += n
    return total


DANUBE3_4B = ModelConfig(
    n_layers=24,
    hidden_size=3840,
    intermediate_size=10240,
    n_heads=32,
    n_kv_heads=8,
    head_size=120,
    vocab_size=32000,
    rope_theta=100000.0,
    max_context=8192,
)

DANUBE3_500M = ModelConfig(
    n_layers=16,
    hidden_size=1536,
    intermediate_size=4096,
    n_heads=16,
    n_kv_heads=8,
    head_size=96,
    vocab_size=32000,
    rope_theta=100000.0,
    max_context=8192,
)

PRESETS = {"danube3-4b": DANUBE3_4B, "danube3-500m": DANUBE3_500M}
