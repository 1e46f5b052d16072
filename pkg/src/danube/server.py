"""Local HTTP chat service: chat-completions JSON API with SSE streaming."""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Iterator, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .config import count_parameters
from .errors import CapacityError, ConfigError, EngineError, InputError
from .generation import (
    ChatTemplate,
    FinishEvent,
    GenerationParams,
    TokenEvent,
    generate,
    render_chat,
)
from .runtime import Model
from .tokenizer import Tokenizer

VALID_ROLES = {"system", "user", "assistant"}


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatRequest(BaseModel):
    messages: list[ChatMessage]
    temperature: Optional[float] = None
    top_p: Optional[float] = None
    top_k: Optional[int] = None
    max_tokens: Optional[int] = Field(default=None, ge=0)
    seed: Optional[int] = None
    stop: Optional[list[str]] = None
    stream: bool = False


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error": {"code": code, "message": message}},
    )


@dataclass
class SessionRegistry:
    capacity: int
    _active: dict[str, float] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def acquire(self) -> Optional[str]:
        with self._lock:
            if len(self._active) >= self.capacity:
                return None
            sid = uuid.uuid4().hex
            self._active[sid] = time.monotonic()
            return sid

    def release(self, sid: str) -> None:
        with self._lock:
            self._active.pop(sid, None)

    def count(self) -> int:
        with self._lock:
            return len(self._active)


class InferenceEngine:
    """One loaded model served to concurrent sessions (weights shared read-only)."""

    def __init__(
        self,
        model: Model,
        tokenizer: Tokenizer,
        template: ChatTemplate,
        defaults: GenerationParams = GenerationParams(),
        max_context: Optional[int] = None,
    ) -> None:
        self.model = model
        self.tokenizer = tokenizer
        self.template = template
        self.defaults = defaults
        self.max_context = max_context or model.config.max_context

    def params_for(self, req: ChatRequest) -> GenerationParams:
        return self.defaults.override(
            temperature=req.temperature,
            top_p=req.top_p,
            top_k=req.top_k,
            max_new_tokens=req.max_tokens,
            seed=req.seed,
            stop_sequences=tuple(req.stop) if req.stop is not None else None,
        )

    def prepare(self, req: ChatRequest):
        """Render the prompt and allocate a session cache; raises on overflow."""
        turns = [(m.role, m.content) for m in req.messages]
        prompt_ids = render_chat(turns, self.template, self.tokenizer)
        cache = self.model.new_cache(self.max_context)
        if len(prompt_ids) >= cache.max_context:
            raise CapacityError(
                f"prompt of {len(prompt_ids)} tokens exceeds context {cache.max_context}"
            )
        return prompt_ids, cache, self.params_for(req)

    def events(self, prompt_ids, cache, params) -> Iterator[TokenEvent | FinishEvent]:
        yield from _with_prompt_count(
            generate(self.model, self.tokenizer, prompt_ids, cache, params),
            len(prompt_ids),
        )


def _with_prompt_count(events, n_prompt):
    for ev in events:
        if isinstance(ev, FinishEvent):
            ev.prompt_tokens = n_prompt  # dynamic, consumed by the handlers
        yield ev


def create_app(
    engine: InferenceEngine,
    workers: int = 1,
    queue: int = 4,
) -> FastAPI:
    app = FastAPI(title="danube", version="0.1.0")
    started = time.monotonic()
    sessions = SessionRegistry(capacity=workers + queue)
    exec_slots = threading.Semaphore(workers)

    def run_events(prepared, sid: str):
        try:
            with _slot(exec_slots):
                yield from engine.events(*prepared)
        finally:
            sessions.release(sid)

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "uptime_seconds": time.monotonic() - started,
            "active_sessions": sessions.count(),
        }

    @app.get("/v1/models")
    def models():
        m = engine.model
        cfg = m.config
        return {
            "object": "list",
            "data": [
                {
                    "id": m.name,
                    "object": "model",
                    "quantization": m.weight_type.value,
                    "parameter_count": count_parameters(cfg),
                    "config": {
                        "n_layers": cfg.n_layers,
                        "hidden_size": cfg.hidden_size,
                        "intermediate_size": cfg.intermediate_size,
                        "n_heads": cfg.n_heads,
                        "n_kv_heads": cfg.n_kv_heads,
                        "head_size": cfg.head_size,
                        "vocab_size": cfg.vocab_size,
                        "rope_theta": cfg.rope_theta,
                        "max_context": cfg.max_context,
                    },
                }
            ],
        }

    @app.post("/v1/chat/completions")
    def chat_completions(req: ChatRequest, request: Request):
        if not req.messages:
            return _error(400, "empty_messages", "messages must not be empty")
        for m in req.messages:
            if m.role not in VALID_ROLES:
                return _error(400, "invalid_role", f"invalid role {m.role!r}")
        try:
            engine.params_for(req)
        except ConfigError as e:
            return _error(400, "invalid_params", str(e))

        sid = sessions.acquire()
        if sid is None:
            return _error(503, "at_capacity", "server is at session capacity")

        try:
            prepared = engine.prepare(req)
        except CapacityError as e:
            sessions.release(sid)
            return _error(409, "context_overflow", str(e))
        except (InputError, ConfigError) as e:
            sessions.release(sid)
            return _error(400, "bad_request", str(e))

        completion_id = f"chatcmpl-{uuid.uuid4().hex[:24]}"
        if req.stream:
            return StreamingResponse(
                _sse_stream(run_events(prepared, sid), completion_id, engine.model.name),
                media_type="text/event-stream",
            )

        try:
            content = []
            finish = None
            for ev in run_events(prepared, sid):
                if isinstance(ev, TokenEvent):
                    content.append(ev.text)
                else:
                    finish = ev
                    content.append(ev.text)
            return {
                "id": completion_id,
                "object": "chat.completion",
                "model": engine.model.name,
                "choices": [
                    {
                        "index": 0,
                        "message": {"role": "assistant", "content": "".join(content)},
                        "finish_reason": finish.reason if finish else "length",
                    }
                ],
                "usage": {
                    "prompt_tokens": getattr(finish, "prompt_tokens", 0),
                    "completion_tokens": finish.n_tokens if finish else 0,
                    "total_tokens": getattr(finish, "prompt_tokens", 0)
                    + (finish.n_tokens if finish else 0),
                },
            }
        except CapacityError as e:
            return _error(409, "context_overflow", str(e))
        except (InputError, ConfigError) as e:
            return _error(400, "bad_request", str(e))
        except EngineError as e:
            return _error(500, "engine_error", str(e))

    return app


class _slot:
    def __init__(self, sem: threading.Semaphore) -> None:
        self.sem = sem

    def __enter__(self):
        self.sem.acquire()
        return self

    def __exit__(self, *exc):
        self.sem.release()


def _sse_stream(events, completion_id: str, model_name: str):
    def chunk(delta: dict, finish_reason=None) -> str:
        payload = {
            "id": completion_id,
            "object": "chat.completion.chunk",
            "model": model_name,
            "choices": [{"index": 0, "delta": delta, "finish_reason": finish_reason}],
        }
        return f"data: {json.dumps(payload)}\n\n"

    try:
        for ev in events:
            if isinstance(ev, TokenEvent):
                if ev.text:
                    yield chunk({"content": ev.text})
            else:
                if ev.text:
                    yield chunk({"content": ev.text})
                yield chunk(
                    {},
                    finish_reason=ev.reason,
                )
    except CapacityError as e:
        yield f"data: {json.dumps({'error': {'code': 'context_overflow', 'message': str(e)}})}\n\n"
    except EngineError as e:
        yield f"data: {json.dumps({'error': {'code': 'engine_error', 'message': str(e)}})}\n\n"
    yield "data: [DONE]\n\n"
