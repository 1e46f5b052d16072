/**
 * HTTP client for the chat-completions API.
 *
 * Only the server's public surface is used: GET /v1/models, GET /health,
 * and POST /v1/chat/completions with stream: true.
 */

import { SseEvent, SseParser } from "./sse.js";
import { Settings } from "./settings.js";
import { Message } from "./state.js";

export interface ModelInfo {
  id: string;
  quantization: string;
  parameter_count: number;
  config: { max_context: number };
}

export async function fetchModel(baseUrl: string): Promise<ModelInfo> {
  const resp = await fetch(`${baseUrl}/v1/models`);
  if (!resp.ok) throw new Error(`GET /v1/models failed: ${resp.status}`);
  const body = await resp.json();
  return body.data[0] as ModelInfo;
}

export interface StreamHandlers {
  onEvent: (ev: SseEvent) => void;
  onHttpError: (status: number, code: string, message: string) => void;
  onNetworkError: (message: string) => void;
}

export async function streamChat(
  baseUrl: string,
  messages: Message[],
  settings: Settings,
  handlers: StreamHandlers,
  fetchImpl: typeof fetch = fetch,
): Promise<void> {
  let resp: Response;
  try {
    resp = await fetchImpl(`${baseUrl}/v1/chat/completions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        messages: messages.map((m) => ({ role: m.role, content: m.content })),
        temperature: settings.temperature,
        top_k: settings.topK,
        top_p: settings.topP,
        max_tokens: settings.maxTokens,
        seed: settings.seed,
        stream: true,
      }),
    });
  } catch (err) {
    handlers.onNetworkError(err instanceof Error ? err.message : String(err));
    return;
  }

  if (!resp.ok) {
    let code = "http_error";
    let message = `HTTP ${resp.status}`;
    try {
      const body = await resp.json();
      code = body?.error?.code ?? code;
      message = body?.error?.message ?? message;
    } catch {
      // non-JSON error body; keep the status-based message
    }
    handlers.onHttpError(resp.status, code, message);
    return;
  }

  if (!resp.body) {
    handlers.onNetworkError("response has no body stream");
    return;
  }

  const reader = resp.body.getReader();
  const decoder = new TextDecoder();
  const parser = new SseParser();
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const ev of parser.feed(decoder.decode(value, { stream: true }))) {
        handlers.onEvent(ev);
      }
    }
  } catch (err) {
    handlers.onNetworkError(err instanceof Error ? err.message : String(err));
  }
}
