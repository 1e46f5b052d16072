/**
 * Chat state machine.
 *
 * Phases: idle -> streaming -> (idle | error). The reducer is pure: it maps
 * (state, action) to a new state plus an optional "start" effect. A stream
 * may only ever be started by that effect, and the reducer emits it only on
 * a transition *into* streaming — so double-streaming is impossible by
 * construction, which the test suite verifies over random action sequences.
 */

export type Phase = "idle" | "streaming" | "error";

export interface Message {
  role: "user" | "assistant";
  content: string;
}

export interface ErrorInfo {
  code: string;
  message: string;
}

export interface ChatState {
  phase: Phase;
  messages: Message[];
  error: ErrorInfo | null;
}

export type Action =
  | { type: "submit"; text: string }
  | { type: "delta"; content: string }
  | { type: "finish"; reason: string }
  | { type: "done" }
  | { type: "error"; code: string; message: string }
  | { type: "reset" };

export type Effect = { type: "start"; prompt: string } | null;

export const INITIAL_STATE: ChatState = {
  phase: "idle",
  messages: [],
  error: null,
};

/** The context_overflow error offers a conversation reset instead of retry. */
export function showsResetAffordance(state: ChatState): boolean {
  return state.phase === "error" && state.error?.code === "context_overflow";
}

export function reduce(state: ChatState, action: Action): [ChatState, Effect] {
  switch (action.type) {
    case "submit": {
      if (state.phase === "streaming") return [state, null]; // already busy
      if (action.text.trim() === "") return [state, null];
      return [
        {
          phase: "streaming",
          messages: [
            ...state.messages,
            { role: "user", content: action.text },
            { role: "assistant", content: "" },
          ],
          error: null,
        },
        { type: "start", prompt: action.text },
      ];
    }
    case "delta": {
      if (state.phase !== "streaming") return [state, null];
      const messages = state.messages.slice();
      const last = messages[messages.length - 1];
      messages[messages.length - 1] = { ...last, content: last.content + action.content };
      return [{ ...state, messages }, null];
    }
    case "finish":
    case "done": {
      if (state.phase !== "streaming") return [state, null];
      return [{ ...state, phase: "idle" }, null];
    }
    case "error": {
      if (state.phase !== "streaming") return [state, null];
      return [
        {
          ...state,
          phase: "error",
          error: { code: action.code, message: action.message },
        },
        null,
      ];
    }
    case "reset": {
      if (state.phase === "streaming") return [state, null]; // must finish first
      return [{ ...INITIAL_STATE, messages: [] }, null];
    }
  }
}

export type Listener = (state: ChatState) => void;
export type StreamStarter = (prompt: string, messages: Message[]) => void;

/** Thin observable wrapper around the reducer for the DOM layer. */
export class ChatStore {
  private state: ChatState = INITIAL_STATE;
  private listeners: Listener[] = [];

  constructor(private starter: StreamStarter) {}

  get(): ChatState {
    return this.state;
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
    fn(this.state);
  }

  dispatch(action: Action): void {
    const [next, effect] = reduce(this.state, action);
    this.state = next;
    for (const fn of this.listeners) fn(next);
    if (effect?.type === "start") {
      // everything up to (not including) the empty assistant placeholder
      this.starter(effect.prompt, next.messages.slice(0, -1));
    }
  }
}
