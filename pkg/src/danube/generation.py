"""Token sampling, chat templating, and the incremental generation loop."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence, Union

import numpy as np
from jinja2.sandbox import ImmutableSandboxedEnvironment

from .errors import ConfigError, InputError, NumericError
from .runtime import KvCache, Model, forward
from .tokenizer import Tokenizer

VALID_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.7
    top_k: int = 40
    top_p: float = 0.95
    repeat_penalty: float = 1.1
    repeat_window: int = 64
    max_new_tokens: int = 256
    seed: int = 0
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.top_k < 0:
            raise ConfigError("top_k must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ConfigError("top_p must be in (0, 1]")
        if self.repeat_penalty < 1:
            raise ConfigError("repeat_penalty must be >= 1")
        if self.max_new_tokens < 0:
            raise ConfigError("max_new_tokens must be >= 0")

    def override(self, **kwargs) -> "GenerationParams":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


def sample_next(
    logits: np.ndarray,
    params: GenerationParams,
    history: Sequence[int],
    rng: np.random.Generator,
) -> int:
    """Pick the next token id from one vocab-length logit row."""
    logits = np.asarray(logits, dtype=np.float64).reshape(-1).copy()
    if np.any(np.isnan(logits)):
        raise NumericError("logits contain NaN")
    if not np.any(logits > -np.inf):
        raise NumericError("degenerate distribution: all logits are -inf")

    if params.repeat_penalty > 1 and params.repeat_window > 0:
        window = list(history)[-params.repeat_window:]
        for tid in set(window):
            if logits[tid] > 0:
                logits[tid] /= params.repeat_penalty
            else:
                logits[tid] *= params.repeat_penalty

    if params.temperature == 0 or params.top_k == 1:
        return int(np.argmax(logits))

    logits = logits / params.temperature
    order = np.argsort(-logits, kind="stable")
    if params.top_k > 0:
        order = order[: params.top_k]
    kept = logits[order]
    kept = kept - kept.max()
    probs = np.exp(kept)
    probs /= probs.sum()
    if params.top_p < 1:
        cum = np.cumsum(probs)
        cut = int(np.searchsorted(cum, params.top_p)) + 1
        order = order[:cut]
        probs = probs[:cut] / probs[:cut].sum()
    return int(order[rng.choice(len(order), p=probs)])


@dataclass(frozen=True)
class ChatTemplate:
    """Deterministic renderer from (role, content) turns to prompt text.

    The template string uses the de-facto checkpoint-embedded templating
    dialect (messages / add_generation_prompt variables, bos/eos tokens).
    """

    source: str  # "checkpoint-metadata" | "user-config"
    template: str

    def render(self, turns: Sequence[tuple[str, str]], bos: str = "", eos: str = "") -> str:
        for role, _ in turns:
            if role not in VALID_ROLES:
                raise InputError(f"invalid role {role!r}")
        env = ImmutableSandboxedEnvironment(trim_blocks=True, lstrip_blocks=True)
        env.globals["raise_exception"] = _template_error
        tpl = env.from_string(self.template)
        return tpl.render(
            messages=[{"role": r, "content": c} for r, c in turns],
            add_generation_prompt=True,
            bos_token=bos,
            eos_token=eos,
        )


def _template_error(msg: str) -> None:
    raise InputError(f"chat template rejected the conversation: {msg}")


def resolve_template(
    tokenizer: Tokenizer, user_template: Optional[str] = None
) -> ChatTemplate:
    """Checkpoint metadata wins; otherwise the user-configured template."""
    meta = tokenizer.vocab.chat_template
    if meta:
        return ChatTemplate("checkpoint-metadata", meta)
    if user_template:
        return ChatTemplate("user-config", user_template)
    raise ConfigError(
        "no chat template: checkpoint metadata has none and no user template configured"
    )


def render_chat(
    turns: Sequence[tuple[str, str]],
    template: ChatTemplate,
    tokenizer: Tokenizer,
    add_bos: bool = True,
) -> list[int]:
    """Render turns and tokenize, mapping control-token markers to their ids.

    Output ends with the assistant-start marker so generation continues the
    assistant turn.
    """
    text = template.render(turns)
    return tokenizer.encode_with_specials(text, add_bos=add_bos)


@dataclass
class TokenEvent:
    token_id: int
    text: str


@dataclass
class FinishEvent:
    reason: str  # eos | stop_sequence | length | capacity
    text: str = ""  # tail of the holdback buffer not already emitted
    n_tokens: int = 0


def generate(
    model: Model,
    tokenizer: Tokenizer,
    prompt_ids: Sequence[int],
    cache: KvCache,
    params: GenerationParams,
) -> Iterator[Union[TokenEvent, FinishEvent]]:
    """Stream tokens until EOS, a stop sequence, the length cap, or capacity.

    Stop sequences are matched on decoded text with a holdback buffer of the
    maximum stop length, so matches spanning token boundaries are caught.
    """
    rng = np.random.default_rng(params.seed & 0xFFFFFFFFFFFFFFFF)
    history = list(prompt_ids)
    decoder = tokenizer.streaming_decoder()
    max_stop = max((len(s) for s in params.stop_sequences), default=0)
    pending = ""  # decoded text withheld for stop matching

    if params.max_new_tokens == 0:
        yield FinishEvent("length")
        return

    logits = forward(model, list(prompt_ids), cache)
    produced = 0
    while True:
        tid = sample_next(logits[-1], params, history, rng)
        if tid == tokenizer.eos_id:
            yield FinishEvent("eos", text=pending + decoder.flush(), n_tokens=produced)
            return
        history.append(tid)
        produced += 1
        pending += decoder.feed(tid)

        if params.stop_sequences:
            hit_at = -1
            for s in params.stop_sequences:
                pos = pending.find(s)
                if pos != -1 and (hit_at == -1 or pos < hit_at):
                    hit_at = pos
            if hit_at != -1:
                yield TokenEvent(tid, pending[:hit_at])
                yield FinishEvent("stop_sequence", n_tokens=produced)
                return
            safe = max(0, len(pending) - max_stop + 1)
            emit, pending = pending[:safe], pending[safe:]
            yield TokenEvent(tid, emit)
        else:
            yield TokenEvent(tid, pending)
            pending = ""

        if produced >= params.max_new_tokens:
            yield FinishEvent("length", text=pending + decoder.flush(), n_tokens=produced)
            return
        if cache.length + 1 > cache.max_context:
            yield FinishEvent("capacity", text=pending + decoder.flush(), n_tokens=produced)
            return
        logits = forward(model, [tid], cache)


class ChatSession:
    """Multi-turn chat with KV-cache reuse across turns.

    Each turn re-renders the whole conversation; when the new rendering is a
    token-wise extension of what the cache already holds (templates are
    prefix-stable), only the suffix is fed. On divergence the cache is
    rebuilt from scratch.
    """

    def __init__(
        self,
        model: Model,
        tokenizer: Tokenizer,
        template: ChatTemplate,
        params: GenerationParams,
        max_context: Optional[int] = None,
    ) -> None:
        self.model = model
        self.tokenizer = tokenizer
        self.template = template
        self.params = params
        self.cache = model.new_cache(max_context)
        self.turns: list[tuple[str, str]] = []
        self._session_ids: list[int] = []

    def reset(self) -> None:
        self.cache.reset()
        self.turns.clear()
        self._session_ids.clear()

    def submit(self, user_text: str) -> Iterator[Union[TokenEvent, FinishEvent]]:
        self.turns.append(("user", user_text))
        ids = render_chat(self.turns, self.template, self.tokenizer)
        if ids[: len(self._session_ids)] == self._session_ids and len(ids) > len(
            self._session_ids
        ):
            prompt = ids[len(self._session_ids):]
        else:
            self.cache.reset()
            prompt = ids
        reply: list[str] = []
        generated: list[int] = []
        for ev in generate(self.model, self.tokenizer, prompt, self.cache, self.params):
            if isinstance(ev, TokenEvent):
                reply.append(ev.text)
                generated.append(ev.token_id)
            else:
                reply.append(ev.text)
            yield ev
        self.turns.append(("assistant", "".join(reply)))
        self._session_ids = ids + generated
