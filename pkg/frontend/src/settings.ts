/**
 * Sampling settings: clamped to the server's valid ranges and persisted.
 *
 * Out-of-range values (hand-edited storage, stale versions) are clamped on
 * load and on every update, so the client never sends a request the server
 * would reject with invalid_params.
 */

export interface Settings {
  temperature: number;
  topK: number;
  topP: number;
  maxTokens: number;
  seed: number;
}

export const DEFAULT_SETTINGS: Settings = {
  temperature: 0.7,
  topK: 40,
  topP: 0.95,
  maxTokens: 256,
  seed: 0,
};

export const LIMITS = {
  temperature: { min: 0, max: 2 },
  topK: { min: 0, max: 1000 },
  topP: { min: 0.01, max: 1 },
  maxTokens: { min: 1, max: 4096 },
  seed: { min: 0, max: 2 ** 31 - 1 },
} as const;

const STORAGE_KEY = "danube.settings.v1";

/** Minimal storage interface so tests can inject an in-memory map. */
export interface KvStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

function clampNumber(value: unknown, min: number, max: number, fallback: number, integer: boolean): number {
  const n = typeof value === "number" ? value : Number(value);
  if (!Number.isFinite(n)) return fallback;
  const clamped = Math.min(max, Math.max(min, n));
  return integer ? Math.round(clamped) : clamped;
}

export function clampSettings(raw: Partial<Settings>): Settings {
  return {
    temperature: clampNumber(
      raw.temperature, LIMITS.temperature.min, LIMITS.temperature.max,
      DEFAULT_SETTINGS.temperature, false,
    ),
    topK: clampNumber(raw.topK, LIMITS.topK.min, LIMITS.topK.max, DEFAULT_SETTINGS.topK, true),
    topP: clampNumber(raw.topP, LIMITS.topP.min, LIMITS.topP.max, DEFAULT_SETTINGS.topP, false),
    maxTokens: clampNumber(
      raw.maxTokens, LIMITS.maxTokens.min, LIMITS.maxTokens.max,
      DEFAULT_SETTINGS.maxTokens, true,
    ),
    seed: clampNumber(raw.seed, LIMITS.seed.min, LIMITS.seed.max, DEFAULT_SETTINGS.seed, true),
  };
}

export function loadSettings(store: KvStore): Settings {
  let raw: unknown;
  try {
    raw = JSON.parse(store.getItem(STORAGE_KEY) ?? "null");
  } catch {
    raw = null;
  }
  if (raw === null || typeof raw !== "object") return { ...DEFAULT_SETTINGS };
  return clampSettings(raw as Partial<Settings>);
}

export function saveSettings(store: KvStore, settings: Settings): Settings {
  const clamped = clampSettings(settings);
  store.setItem(STORAGE_KEY, JSON.stringify(clamped));
  return clamped;
}

export class MemoryStore implements KvStore {
  private map = new Map<string, string>();
  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
}
