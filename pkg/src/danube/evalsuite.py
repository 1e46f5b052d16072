"""Perplexity evaluation and size/quality reporting.

The corpus is tokenized once and split into consecutive non-overlapping
windows; only the second half of each window is scored (the first half is
context burn-in), mirroring the standard sliding perplexity test.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InputError
from .quant import ENCODABLE, QuantType
from .runtime import Model, forward
from .tokenizer import Tokenizer

DEFAULT_WINDOW = 512


@dataclass
class WindowScore:
    index: int
    tokens_scored: int
    nll_sum: float  # nats


@dataclass
class PerplexityReport:
    corpus_id: str
    window: int
    tokens_scored: int
    mean_nll: float  # nats per token
    perplexity: float
    windows: list[WindowScore] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PerplexityReport":
        d = json.loads(text)
        d["windows"] = [WindowScore(**w) for w in d["windows"]]
        return cls(**d)

    def to_text(self) -> str:
        lines = [
            f"corpus: {self.corpus_id}",
            f"window: {self.window}",
            f"tokens scored: {self.tokens_scored}",
            f"mean nll: {self.mean_nll:.6f} nats/token",
            f"perplexity: {self.perplexity:.4f}",
        ]
        for w in self.windows:
            lines.append(f"  window {w.index}: {w.tokens_scored} tokens, nll {w.nll_sum:.4f}")
        return "\n".join(lines)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    x = logits.astype(np.float64)
    m = x.max(axis=-1, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=-1, keepdims=True))


def _window_logits(model, tokens: Sequence[int]) -> np.ndarray:
    """Fresh-context logits for one window; stub models may supply logits_for."""
    if hasattr(model, "logits_for"):
        return np.asarray(model.logits_for(list(tokens)))
    cache = model.new_cache()
    return forward(model, tokens, cache)


def perplexity(
    model,
    tokenizer: Optional[Tokenizer],
    corpus: Union[str, Sequence[int]],
    window: int = DEFAULT_WINDOW,
    corpus_id: str = "corpus",
    add_bos: bool = True,
) -> PerplexityReport:
    """Windowed perplexity; burn-in is the first half of each window."""
    if isinstance(corpus, str):
        if tokenizer is None:
            raise InputError("text corpus requires a tokenizer")
        tokens = tokenizer.encode(corpus, add_bos=add_bos)
    else:
        tokens = list(corpus)
    if len(tokens) < window:
        raise InputError(
            f"corpus tokenizes to {len(tokens)} tokens; need at least {window}"
        )
    burn_in = window // 2
    n_windows = len(tokens) // window

    windows: list[WindowScore] = []
    total_nll = 0.0
    total_scored = 0
    for w in range(n_windows):
        chunk = tokens[w * window : (w + 1) * window]
        logp = _log_softmax(_window_logits(model, chunk))
        nll = 0.0
        scored = 0
        for i in range(burn_in, window):
            # logits at i-1 predict token i
            nll -= float(logp[i - 1, chunk[i]])
            scored += 1
        windows.append(WindowScore(w, scored, nll))
        total_nll += nll
        total_scored += scored

    mean = total_nll / total_scored
    return PerplexityReport(
        corpus_id=corpus_id,
        window=window,
        tokens_scored=total_scored,
        mean_nll=mean,
        perplexity=math.exp(mean),
        windows=windows,
    )


@dataclass
class SizeQualityRow:
    method: str
    bytes: int
    perplexity: Optional[float]  # None for accounting-only rows

    def gigabytes(self) -> float:
        return self.bytes / 1e9


def size_quality_table(
    model_path: Union[str, Path],
    targets: Sequence[QuantType],
    corpus: Optional[str] = None,
    window: int = DEFAULT_WINDOW,
    workdir: Optional[Path] = None,
) -> list[SizeQualityRow]:
    """Re-quantize a model at each target, measure file size and perplexity.

    Targets outside the encodable set get accounting-only rows (predicted
    size, no perplexity).
    """
    import tempfile

    from .convert import quantize_file
    from .gguf import read_gguf, read_config
    from .quant import UNIFORM_POLICY, predict_model_size

    g = read_gguf(model_path)
    config = read_config(g)
    g.close()

    rows: list[SizeQualityRow] = []
    with tempfile.TemporaryDirectory() as tmp:
        outdir = Path(workdir) if workdir else Path(tmp)
        for target in targets:
            if target not in ENCODABLE:
                rows.append(
                    SizeQualityRow(
                        target.value,
                        predict_model_size(config, target, UNIFORM_POLICY),
                        None,
                    )
                )
                continue
            out = outdir / f"requant-{target.value.lower()}.gguf"
            quantize_file(model_path, out, target)
            ppl = None
            if corpus is not None:
                model, tok_data = Model.from_gguf(str(out))
                from .tokenizer import Tokenizer, Vocabulary

                tok = Tokenizer(Vocabulary.from_tokenizer_data(tok_data))
                ppl = perplexity(model, tok, corpus, window=window).perplexity
            rows.append(SizeQualityRow(target.value, out.stat().st_size, ppl))
    return rows


def format_table(rows: Sequence[SizeQualityRow]) -> str:
    lines = [f"{'Quant method':<14} {'Model size':>12} {'Perplexity':>12}"]
    for r in rows:
        ppl = f"{r.perplexity:.4f}" if r.perplexity is not None else "-"
        lines.append(f"{r.method:<14} {r.gigabytes():>9.2f} GB {ppl:>12}")
    return "\n".join(lines)
