/**
 * Incremental parser for the server's SSE stream.
 *
 * The wire format is `data: <json>\n\n` frames terminated by
 * `data: [DONE]\n\n`. Each JSON frame is either a chat.completion.chunk
 * with `choices[0].delta.content` / `choices[0].finish_reason`, or an
 * in-stream error object `{error: {code, message}}`.
 */

export type SseEvent =
  | { kind: "delta"; content: string }
  | { kind: "finish"; reason: string }
  | { kind: "error"; code: string; message: string }
  | { kind: "done" };

interface ChunkPayload {
  choices?: Array<{
    delta?: { content?: string };
    finish_reason?: string | null;
  }>;
  error?: { code?: string; message?: string };
}

/** Stateful line-buffer: feed raw text chunks, get parsed events out. */
export class SseParser {
  private buffer = "";

  /** Feed one network chunk; returns all events completed by it. */
  feed(chunk: string): SseEvent[] {
    this.buffer += chunk;
    const events: SseEvent[] = [];
    let idx: number;
    while ((idx = this.buffer.indexOf("\n")) !== -1) {
      const line = this.buffer.slice(0, idx).replace(/\r$/, "");
      this.buffer = this.buffer.slice(idx + 1);
      const ev = parseLine(line);
      if (ev) events.push(ev);
    }
    return events;
  }
}

function parseLine(line: string): SseEvent | null {
  if (!line.startsWith("data: ")) return null;
  const payload = line.slice("data: ".length);
  if (payload === "[DONE]") return { kind: "done" };

  let parsed: ChunkPayload;
  try {
    parsed = JSON.parse(payload);
  } catch {
    return {
      kind: "error",
      code: "bad_frame",
      message: "unparseable SSE frame from server",
    };
  }

  if (parsed.error) {
    return {
      kind: "error",
      code: parsed.error.code ?? "unknown",
      message: parsed.error.message ?? "server error",
    };
  }

  const choice = parsed.choices?.[0];
  if (!choice) return null;
  if (choice.finish_reason) return { kind: "finish", reason: choice.finish_reason };
  const content = choice.delta?.content;
  if (typeof content === "string" && content.length > 0) {
    return { kind: "delta", content };
  }
  return null;
}
