// Session state: model/language selection, sampler controls, prompt
// history, pending generations, and score drafts. Everything except
// in-flight requests survives a reload through the injected storage.

import type { GeneratedSample } from "./api.js";
import type { Metric, ScoreRecord } from "./aggregate.js";
import { METRICS } from "./aggregate.js";

export interface SamplerControls {
  temperature: number;
  top_p: number | null;
  top_k: number | null;
  n: number;
  max_new_tokens: number;
}

export const DEFAULT_CONTROLS: SamplerControls = {
  temperature: 1.0,
  top_p: 0.9,
  top_k: null,
  n: 3,
  max_new_tokens: 64,
};

export interface PendingGeneration {
  promptId: string;
  prompt: string;
  modelId: string;
  seed: number;
  samples: GeneratedSample[];
  scored: boolean[];
}

export type ScoreDraft = Record<Metric, number | null> & { note: string };

export interface SessionData {
  modelId: string | null;
  language: string | null;
  evaluatorId: string;
  blindMode: boolean;
  controls: SamplerControls;
  history: string[];
  generations: PendingGeneration[];
  drafts: Record<string, ScoreDraft>;
  scores: ScoreRecord[];
}

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const STORAGE_KEY = "indiclm-playground-session";
const HISTORY_LIMIT = 50;

export function emptyDraft(): ScoreDraft {
  return { grammar: null, coherence: null, creativity: null, factuality: null, note: "" };
}

export function clampMetric(value: number): number | null {
  // 0..5 in 0.5 steps; anything else is refused, not silently rounded
  if (!Number.isFinite(value) || value < 0 || value > 5) return null;
  return Math.round(value * 2) / 2 === value ? value : null;
}

export function validControls(c: SamplerControls): string | null {
  if (!(c.temperature >= 0)) return "temperature must be >= 0";
  if (c.top_p !== null && !(c.top_p > 0 && c.top_p <= 1)) return "top-p must be in (0, 1]";
  if (c.top_k !== null && !(Number.isInteger(c.top_k) && c.top_k >= 1))
    return "top-k must be a positive integer";
  if (!(Number.isInteger(c.n) && c.n >= 1 && c.n <= 16)) return "n must be 1..16";
  if (!(Number.isInteger(c.max_new_tokens) && c.max_new_tokens >= 1))
    return "max new tokens must be >= 1";
  return null;
}

export class SessionState {
  data: SessionData;

  constructor(private storage: StorageLike | null = null) {
    this.data = {
      modelId: null,
      language: null,
      evaluatorId: "evaluator",
      blindMode: false,
      controls: { ...DEFAULT_CONTROLS },
      history: [],
      generations: [],
      drafts: {},
      scores: [],
    };
    this.load();
  }

  load(): void {
    const raw = this.storage?.getItem(STORAGE_KEY);
    if (!raw) return;
    try {
      const parsed = JSON.parse(raw) as Partial<SessionData>;
      this.data = { ...this.data, ...parsed, controls: { ...DEFAULT_CONTROLS, ...parsed.controls } };
    } catch {
      /* corrupted persistence is discarded */
    }
  }

  persist(): void {
    this.storage?.setItem(STORAGE_KEY, JSON.stringify(this.data));
  }

  recordGeneration(gen: PendingGeneration): void {
    this.data.generations.unshift(gen);
    if (!this.data.history.includes(gen.prompt)) {
      this.data.history.unshift(gen.prompt);
      this.data.history = this.data.history.slice(0, HISTORY_LIMIT);
    }
    this.persist();
  }

  draftKey(promptId: string, sampleIndex: number): string {
    return `${promptId}:${sampleIndex}`;
  }

  getDraft(promptId: string, sampleIndex: number): ScoreDraft {
    const key = this.draftKey(promptId, sampleIndex);
    if (!this.data.drafts[key]) this.data.drafts[key] = emptyDraft();
    return this.data.drafts[key];
  }

  draftComplete(draft: ScoreDraft): boolean {
    return METRICS.every((m) => draft[m] !== null);
  }

  recordScore(gen: PendingGeneration, sampleIndex: number, draft: ScoreDraft): ScoreRecord {
    const record: ScoreRecord = {
      prompt_id: gen.promptId,
      model_id: gen.modelId,
      evaluator_id: this.data.evaluatorId,
      sample_index: sampleIndex,
      grammar: draft.grammar as number,
      coherence: draft.coherence as number,
      creativity: draft.creativity as number,
      factuality: draft.factuality as number,
    };
    this.data.scores.push(record);
    gen.scored[sampleIndex] = true;
    this.persist();
    return record;
  }
}
