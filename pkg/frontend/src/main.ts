// Playground + annotation UI over the /v1 API. Select a language and
// model, prompt it, read the top-n samples, score each one on the four
// 0..5 metrics, and watch per-model aggregates form. No value shown here
// is invented locally: everything comes from an API response or user input.

import { ApiClient, ApiError, ModelInfo } from "./api.js";
import { aggregateScores, aggregateCsv, METRICS, Metric } from "./aggregate.js";
import {
  PendingGeneration,
  SessionState,
  clampMetric,
  validControls,
} from "./state.js";

type RetryAction = (() => Promise<void>) | null;

export class PlaygroundApp {
  state: SessionState;
  models: ModelInfo[] = [];
  inFlight = false;
  lastAction: RetryAction = null;

  constructor(
    readonly root: Document,
    readonly api: ApiClient,
    storage: Storage | null = null,
  ) {
    this.state = new SessionState(storage);
  }

  el<T extends HTMLElement>(selector: string): T {
    const node = this.root.querySelector(selector);
    if (!node) throw new Error(`missing element ${selector}`);
    return node as T;
  }

  async start(): Promise<void> {
    this.bind();
    await this.guard(async () => {
      const body = await this.api.listModels();
      this.models = body.models;
      this.renderModelOptions();
    });
    this.renderAll();
  }

  bind(): void {
    this.el("#generate-btn").addEventListener("click", () => void this.generate());
    this.el<HTMLTextAreaElement>("#prompt-input").addEventListener("input", () =>
      this.renderControls(),
    );
    this.el<HTMLSelectElement>("#language-select").addEventListener("change", (ev) => {
      this.state.data.language = (ev.target as HTMLSelectElement).value || null;
      this.state.persist();
      this.renderModelOptions();
    });
    this.el<HTMLSelectElement>("#model-select").addEventListener("change", (ev) => {
      this.state.data.modelId = (ev.target as HTMLSelectElement).value || null;
      this.state.persist();
      this.renderControls();
    });
    this.el<HTMLInputElement>("#blind-mode").addEventListener("change", (ev) => {
      this.state.data.blindMode = (ev.target as HTMLInputElement).checked;
      this.state.persist();
      this.renderAll();
    });
    this.el("#export-btn").addEventListener("click", () => this.exportCsv());
    this.el("#retry-btn").addEventListener("click", () => {
      const action = this.lastAction;
      this.clearError();
      if (action) void this.guard(action);
    });
    for (const field of ["temperature", "top_p", "top_k", "n"] as const) {
      this.el<HTMLInputElement>(`#ctl-${field}`).addEventListener("change", (ev) => {
        const raw = (ev.target as HTMLInputElement).value.trim();
        const controls = this.state.data.controls;
        if (field === "top_k") controls.top_k = raw === "" ? null : Number(raw);
        else if (field === "top_p") controls.top_p = raw === "" ? null : Number(raw);
        else controls[field] = Number(raw);
        this.state.persist();
        this.renderControls();
      });
    }
  }

  async guard(action: () => Promise<void>): Promise<void> {
    this.lastAction = action;
    try {
      await action();
      this.clearError();
    } catch (err) {
      this.showError(err instanceof ApiError ? err.message : String(err));
    }
  }

  showError(message: string): void {
    const banner = this.el("#error-banner");
    banner.hidden = false;
    this.el("#error-text").textContent = message;
  }

  clearError(): void {
    this.el("#error-banner").hidden = true;
  }

  visibleModels(): ModelInfo[] {
    const lang = this.state.data.language;
    return lang ? this.models.filter((m) => !m.language || m.language === lang) : this.models;
  }

  canGenerate(): boolean {
    const prompt = this.el<HTMLTextAreaElement>("#prompt-input").value.trim();
    return (
      !this.inFlight &&
      prompt.length > 0 &&
      !!this.state.data.modelId &&
      validControls(this.state.data.controls) === null
    );
  }

  async generate(): Promise<void> {
    if (!this.canGenerate()) return;
    const prompt = this.el<HTMLTextAreaElement>("#prompt-input").value.trim();
    const modelId = this.state.data.modelId as string;
    const controls = this.state.data.controls;
    this.inFlight = true;
    this.renderControls();
    await this.guard(async () => {
      const body = await this.api.generate({
        model: modelId,
        prompt,
        temperature: controls.temperature,
        top_p: controls.top_p,
        top_k: controls.top_k,
        n: controls.n,
        max_new_tokens: controls.max_new_tokens,
      });
      const gen: PendingGeneration = {
        promptId: `prompt-${Date.now()}-${this.state.data.generations.length}`,
        prompt,
        modelId: body.model,
        seed: body.seed,
        samples: body.samples,
        scored: body.samples.map(() => false),
      };
      this.state.recordGeneration(gen);
    });
    this.inFlight = false;
    this.renderAll();
  }

  async saveScore(gen: PendingGeneration, sampleIndex: number): Promise<void> {
    const draft = this.state.getDraft(gen.promptId, sampleIndex);
    if (!this.state.draftComplete(draft)) return;
    await this.guard(async () => {
      await this.api.postScore({
        prompt_id: gen.promptId,
        model_id: gen.modelId,
        sample_index: sampleIndex,
        grammar: draft.grammar as number,
        coherence: draft.coherence as number,
        creativity: draft.creativity as number,
        factuality: draft.factuality as number,
        evaluator_id: this.state.data.evaluatorId,
        note: draft.note || null,
      });
      this.state.recordScore(gen, sampleIndex, draft);
    });
    this.renderAll();
  }

  exportCsv(): string | null {
    if (!this.state.data.scores.length) return null;
    const csv = aggregateCsv(aggregateScores(this.state.data.scores, this.state.data.controls.n));
    const blob = new Blob([csv], { type: "text/csv" });
    const link = this.root.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "session-scores.csv";
    link.click();
    URL.revokeObjectURL(link.href);
    return csv;
  }

  renderAll(): void {
    this.renderControls();
    this.renderHistory();
    this.renderGenerations();
    this.renderAggregates();
  }

  renderModelOptions(): void {
    const select = this.el<HTMLSelectElement>("#model-select");
    const models = this.visibleModels();
    select.innerHTML = "";
    const blank = this.root.createElement("option");
    blank.value = "";
    blank.textContent = "select a model";
    select.appendChild(blank);
    for (const model of models) {
      const option = this.root.createElement("option");
      option.value = model.id;
      option.textContent = this.state.data.blindMode
        ? `model ${models.indexOf(model) + 1}`
        : `${model.id} (${model.precision}, ${(model.params / 1e6).toFixed(1)}M)`;
      select.appendChild(option);
    }
    if (this.state.data.modelId && models.some((m) => m.id === this.state.data.modelId)) {
      select.value = this.state.data.modelId;
    } else {
      this.state.data.modelId = null;
    }

    const langs = [...new Set(this.models.map((m) => m.language).filter(Boolean))].sort();
    const langSelect = this.el<HTMLSelectElement>("#language-select");
    langSelect.innerHTML = "";
    const all = this.root.createElement("option");
    all.value = "";
    all.textContent = "all languages";
    langSelect.appendChild(all);
    for (const lang of langs) {
      const option = this.root.createElement("option");
      option.value = lang;
      option.textContent = lang;
      langSelect.appendChild(option);
    }
    if (this.state.data.language) langSelect.value = this.state.data.language;
    this.renderControls();
  }

  renderControls(): void {
    const controls = this.state.data.controls;
    this.el<HTMLInputElement>("#ctl-temperature").value = String(controls.temperature);
    this.el<HTMLInputElement>("#ctl-top_p").value = controls.top_p === null ? "" : String(controls.top_p);
    this.el<HTMLInputElement>("#ctl-top_k").value = controls.top_k === null ? "" : String(controls.top_k);
    this.el<HTMLInputElement>("#ctl-n").value = String(controls.n);
    const problem = validControls(controls);
    this.el("#controls-error").textContent = problem ?? "";
    const button = this.el<HTMLButtonElement>("#generate-btn");
    button.disabled = !this.canGenerate();
    button.textContent = this.inFlight ? "Generating..." : "Generate";
    this.el<HTMLButtonElement>("#export-btn").disabled = !this.state.data.scores.length;
    this.el<HTMLInputElement>("#blind-mode").checked = this.state.data.blindMode;
  }

  renderHistory(): void {
    const list = this.el("#history");
    list.innerHTML = "";
    for (const prompt of this.state.data.history) {
      const item = this.root.createElement("li");
      const link = this.root.createElement("button");
      link.type = "button";
      link.className = "history-item";
      link.textContent = prompt;
      link.addEventListener("click", () => {
        this.el<HTMLTextAreaElement>("#prompt-input").value = prompt;
        this.renderControls();
      });
      item.appendChild(link);
      list.appendChild(item);
    }
  }

  renderGenerations(): void {
    const container = this.el("#samples");
    container.innerHTML = "";
    for (const gen of this.state.data.generations) {
      const block = this.root.createElement("section");
      block.className = "generation";
      const head = this.root.createElement("h3");
      head.textContent = this.state.data.blindMode
        ? `"${gen.prompt}"`
        : `"${gen.prompt}" - ${gen.modelId} (seed ${gen.seed})`;
      block.appendChild(head);
      gen.samples.forEach((sample) => {
        block.appendChild(this.renderSample(gen, sample.index));
      });
      container.appendChild(block);
    }
  }

  renderSample(gen: PendingGeneration, sampleIndex: number): HTMLElement {
    const sample = gen.samples[sampleIndex];
    const card = this.root.createElement("article");
    card.className = "sample";
    card.dataset.promptId = gen.promptId;
    card.dataset.sampleIndex = String(sampleIndex);

    const meta = this.root.createElement("div");
    meta.className = "sample-meta";
    meta.textContent =
      `#${sample.index} - ${sample.tokens} tokens - ${sample.seconds.toFixed(2)}s` +
      (gen.scored[sampleIndex] ? " - scored" : "");
    card.appendChild(meta);

    const text = this.root.createElement("p");
    text.className = "sample-text";
    text.textContent = sample.text;
    card.appendChild(text);

    const form = this.root.createElement("div");
    form.className = "score-form";
    const draft = this.state.getDraft(gen.promptId, sampleIndex);
    for (const metric of METRICS) {
      const label = this.root.createElement("label");
      label.textContent = metric;
      const input = this.root.createElement("input");
      input.type = "number";
      input.min = "0";
      input.max = "5";
      input.step = "0.5";
      input.className = "metric-input";
      input.dataset.metric = metric;
      if (draft[metric] !== null) input.value = String(draft[metric]);
      input.addEventListener("change", () => {
        const value = clampMetric(Number(input.value));
        draft[metric as Metric] = value;
        input.classList.toggle("invalid", input.value !== "" && value === null);
        this.state.persist();
        save.disabled = !this.state.draftComplete(draft) || gen.scored[sampleIndex];
      });
      label.appendChild(input);
      form.appendChild(label);
    }
    const note = this.root.createElement("input");
    note.type = "text";
    note.placeholder = "note (optional)";
    note.className = "note-input";
    note.value = draft.note;
    note.addEventListener("change", () => {
      draft.note = note.value;
      this.state.persist();
    });
    form.appendChild(note);

    const save = this.root.createElement("button");
    save.type = "button";
    save.className = "save-score-btn";
    save.textContent = gen.scored[sampleIndex] ? "Scored" : "Save score";
    save.disabled = !this.state.draftComplete(draft) || gen.scored[sampleIndex];
    save.addEventListener("click", () => void this.saveScore(gen, sampleIndex));
    form.appendChild(save);
    card.appendChild(form);
    return card;
  }

  renderAggregates(): void {
    const panel = this.el("#aggregate-panel");
    panel.innerHTML = "";
    const scores = this.state.data.scores;
    if (!scores.length) {
      panel.textContent = "no scores yet";
      return;
    }
    const result = aggregateScores(scores, this.state.data.controls.n);
    const table = this.root.createElement("table");
    const header = this.root.createElement("tr");
    for (const cell of ["model", ...METRICS]) {
      const th = this.root.createElement("th");
      th.textContent = cell;
      header.appendChild(th);
    }
    table.appendChild(header);
    for (const model of Object.keys(result.models).sort()) {
      const row = this.root.createElement("tr");
      row.dataset.model = model;
      const name = this.root.createElement("td");
      name.textContent = model;
      row.appendChild(name);
      for (const metric of METRICS) {
        const td = this.root.createElement("td");
        td.dataset.metric = metric;
        td.textContent = result.models[model][metric].toFixed(5);
        row.appendChild(td);
      }
      table.appendChild(row);
    }
    panel.appendChild(table);
    if (result.incompleteGroups > 0) {
      const notice = this.root.createElement("p");
      notice.className = "incomplete-note";
      notice.textContent = `${result.incompleteGroups} prompt/evaluator group(s) still missing samples`;
      panel.appendChild(notice);
    }
  }
}

export function boot(): void {
  const app = new PlaygroundApp(document, new ApiClient(""), window.localStorage);
  void app.start();
}

if (typeof window !== "undefined" && !(globalThis as { __INDICLM_TEST__?: boolean }).__INDICLM_TEST__) {
  window.addEventListener("DOMContentLoaded", boot);
}
