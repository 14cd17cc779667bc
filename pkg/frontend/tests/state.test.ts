import { describe, expect, it } from "vitest";

import {
  DEFAULT_CONTROLS,
  SessionState,
  StorageLike,
  clampMetric,
  emptyDraft,
  validControls,
} from "../src/state.js";

class MemoryStorage implements StorageLike {
  store = new Map<string, string>();
  getItem(key: string) {
    return this.store.get(key) ?? null;
  }
  setItem(key: string, value: string) {
    this.store.set(key, value);
  }
}

describe("clampMetric", () => {
  it("accepts the 0..5 half-point grid", () => {
    for (const v of [0, 0.5, 1, 3.5, 5]) expect(clampMetric(v)).toBe(v);
  });
  it("rejects out-of-range and off-grid values", () => {
    for (const v of [-0.5, 5.5, 6, 2.3, NaN, Infinity]) expect(clampMetric(v)).toBeNull();
  });
});

describe("validControls", () => {
  it("accepts the defaults", () => {
    expect(validControls(DEFAULT_CONTROLS)).toBeNull();
  });
  it("mirrors the sampler bounds", () => {
    expect(validControls({ ...DEFAULT_CONTROLS, temperature: -1 })).toMatch(/temperature/);
    expect(validControls({ ...DEFAULT_CONTROLS, top_p: 0 })).toMatch(/top-p/);
    expect(validControls({ ...DEFAULT_CONTROLS, top_p: 1.2 })).toMatch(/top-p/);
    expect(validControls({ ...DEFAULT_CONTROLS, top_k: 0 })).toMatch(/top-k/);
    expect(validControls({ ...DEFAULT_CONTROLS, n: 0 })).toMatch(/n must/);
    expect(validControls({ ...DEFAULT_CONTROLS, top_k: null, top_p: null })).toBeNull();
  });
});

describe("SessionState persistence", () => {
  it("survives a reload through storage", () => {
    const storage = new MemoryStorage();
    const first = new SessionState(storage);
    first.data.modelId = "tiny-hi";
    first.data.controls.temperature = 0.7;
    first.recordGeneration({
      promptId: "p1",
      prompt: "नमस्ते",
      modelId: "tiny-hi",
      seed: 42,
      samples: [{ index: 0, text: "…", tokens: 3, seconds: 0.1 }],
      scored: [false],
    });

    const reloaded = new SessionState(storage);
    expect(reloaded.data.modelId).toBe("tiny-hi");
    expect(reloaded.data.controls.temperature).toBe(0.7);
    expect(reloaded.data.history).toEqual(["नमस्ते"]);
    expect(reloaded.data.generations).toHaveLength(1);
  });

  it("discards corrupted persistence", () => {
    const storage = new MemoryStorage();
    storage.setItem("indiclm-playground-session", "{not json");
    const state = new SessionState(storage);
    expect(state.data.modelId).toBeNull();
  });

  it("keeps history deduplicated and bounded", () => {
    const state = new SessionState(null);
    for (let i = 0; i < 60; i++) {
      state.recordGeneration({
        promptId: `p${i}`,
        prompt: `prompt ${i % 55}`,
        modelId: "m",
        seed: i,
        samples: [],
        scored: [],
      });
    }
    expect(state.data.history.length).toBeLessThanOrEqual(50);
    expect(new Set(state.data.history).size).toBe(state.data.history.length);
  });
});

describe("score drafts", () => {
  it("completion requires all four metrics", () => {
    const state = new SessionState(null);
    const draft = state.getDraft("p1", 0);
    expect(state.draftComplete(draft)).toBe(false);
    draft.grammar = 5;
    draft.coherence = 5;
    draft.creativity = 4;
    expect(state.draftComplete(draft)).toBe(false);
    draft.factuality = 0; // unverifiable premise is a legal zero
    expect(state.draftComplete(draft)).toBe(true);
  });

  it("recording a score marks the sample and stores the record", () => {
    const state = new SessionState(null);
    const gen = {
      promptId: "p1",
      prompt: "x",
      modelId: "m",
      seed: 1,
      samples: [{ index: 0, text: "t", tokens: 1, seconds: 0 }],
      scored: [false],
    };
    const draft = { ...emptyDraft(), grammar: 5, coherence: 5, creativity: 4, factuality: 3.5 };
    const record = state.recordScore(gen, 0, draft);
    expect(gen.scored[0]).toBe(true);
    expect(record.model_id).toBe("m");
    expect(state.data.scores).toHaveLength(1);
  });
});
