/** DOM wiring: connects the store, settings panel, and SSE client. */

import { fetchModel, streamChat } from "./api.js";
import { renderMarkdown } from "./markdown.js";
import {
  DEFAULT_SETTINGS,
  KvStore,
  LIMITS,
  MemoryStore,
  Settings,
  clampSettings,
  loadSettings,
  saveSettings,
} from "./settings.js";
import { ChatStore, Message, showsResetAffordance } from "./state.js";

const BASE_URL = "";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function storage(): KvStore {
  try {
    return window.localStorage;
  } catch {
    return new MemoryStore(); // blocked storage (private mode / iframe)
  }
}

export function main(): void {
  const log = el<HTMLDivElement>("chat-log");
  const input = el<HTMLTextAreaElement>("chat-input");
  const sendBtn = el<HTMLButtonElement>("send");
  const resetBtn = el<HTMLButtonElement>("reset");
  const banner = el<HTMLDivElement>("banner");
  const modelLine = el<HTMLDivElement>("model-line");

  const store = storage();
  let settings = loadSettings(store);
  bindSettingsPanel(settings, (next) => {
    settings = saveSettings(store, next);
  });

  const chat = new ChatStore((_prompt, messages: Message[]) => {
    void streamChat(BASE_URL, messages, settings, {
      onEvent: (ev) => {
        if (ev.kind === "delta") chat.dispatch({ type: "delta", content: ev.content });
        else if (ev.kind === "finish") chat.dispatch({ type: "finish", reason: ev.reason });
        else if (ev.kind === "done") chat.dispatch({ type: "done" });
        else chat.dispatch({ type: "error", code: ev.code, message: ev.message });
      },
      onHttpError: (_status, code, message) =>
        chat.dispatch({ type: "error", code, message }),
      onNetworkError: (message) =>
        chat.dispatch({ type: "error", code: "network", message }),
    });
  });

  chat.subscribe((state) => {
    log.innerHTML = state.messages
      .map(
        (m) =>
          `<div class="msg ${m.role}">${
            m.role === "assistant" ? renderMarkdown(m.content) : renderMarkdown(m.content)
          }</div>`,
      )
      .join("");
    log.scrollTop = log.scrollHeight;

    sendBtn.disabled = state.phase === "streaming";
    input.disabled = state.phase === "streaming";

    if (state.phase === "error" && state.error) {
      banner.hidden = false;
      banner.textContent = `${state.error.message} `;
      if (showsResetAffordance(state)) {
        const btn = document.createElement("button");
        btn.textContent = "Reset conversation";
        btn.onclick = () => chat.dispatch({ type: "reset" });
        banner.appendChild(btn);
      }
    } else {
      banner.hidden = true;
      banner.textContent = "";
    }
  });

  const submit = () => {
    const text = input.value;
    input.value = "";
    chat.dispatch({ type: "submit", text });
  };
  sendBtn.onclick = submit;
  input.onkeydown = (ev) => {
    if (ev.key === "Enter" && !ev.shiftKey) {
      ev.preventDefault();
      submit();
    }
  };
  resetBtn.onclick = () => chat.dispatch({ type: "reset" });

  void fetchModel(BASE_URL)
    .then((m) => {
      modelLine.textContent =
        `${m.id} · ${m.quantization} · ` +
        `${(m.parameter_count / 1e9).toFixed(2)}B params · ctx ${m.config.max_context}`;
    })
    .catch(() => {
      modelLine.textContent = "server unreachable";
    });
}

function bindSettingsPanel(initial: Settings, onChange: (s: Settings) => void): void {
  const fields: Array<[keyof Settings, string]> = [
    ["temperature", "set-temperature"],
    ["topK", "set-top-k"],
    ["topP", "set-top-p"],
    ["maxTokens", "set-max-tokens"],
    ["seed", "set-seed"],
  ];
  const inputs = new Map<keyof Settings, HTMLInputElement>();
  for (const [key, id] of fields) {
    const node = el<HTMLInputElement>(id);
    const lim = LIMITS[key];
    node.min = String(lim.min);
    node.max = String(lim.max);
    node.value = String(initial[key]);
    inputs.set(key, node);
  }
  const read = (): Settings => {
    const raw: Partial<Settings> = {};
    for (const [key, node] of inputs) raw[key] = Number(node.value);
    return clampSettings(raw);
  };
  for (const node of inputs.values()) {
    node.onchange = () => {
      const next = read();
      for (const [key, field] of inputs) field.value = String(next[key]);
      onChange(next);
    };
  }
  el<HTMLButtonElement>("set-defaults").onclick = () => {
    for (const [key, node] of inputs) node.value = String(DEFAULT_SETTINGS[key]);
    onChange({ ...DEFAULT_SETTINGS });
  };
}

if (typeof document !== "undefined" && document.getElementById("chat-log")) {
  main();
}
