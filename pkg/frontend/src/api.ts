// Typed client for the /v1 generation and scoring API.

export interface ModelInfo {
  id: string;
  precision: string;
  language: string;
  params: number;
  config: {
    vocab_size: number;
    d_model: number;
    n_layers: number;
    n_heads: number;
    context_len: number;
  };
}

export interface GenerateRequest {
  model: string;
  prompt: string;
  temperature: number;
  top_k?: number | null;
  top_p?: number | null;
  max_new_tokens: number;
  n: number;
  seed?: number | null;
}

export interface GeneratedSample {
  index: number;
  text: string;
  tokens: number;
  seconds: number;
}

export interface GenerateResponse {
  model: string;
  seed: number;
  samples: GeneratedSample[];
}

export interface ScorePayload {
  prompt_id: string;
  model_id: string;
  sample_index: number;
  grammar: number;
  coherence: number;
  creativity: number;
  factuality: number;
  evaluator_id: string;
  note?: string | null;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number | null = null,
    readonly detail: unknown = null,
  ) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  let res: Response;
  try {
    res = await fetch(base + path, init);
  } catch (err) {
    throw new ApiError(`cannot reach server: ${String(err)}`);
  }
  let body: unknown = null;
  try {
    body = await res.json();
  } catch {
    /* non-JSON error body */
  }
  if (!res.ok) {
    const detail = (body as { detail?: unknown })?.detail ?? body;
    throw new ApiError(`${path} failed (${res.status})`, res.status, detail);
  }
  return body as T;
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  listModels(): Promise<{ models: ModelInfo[] }> {
    return request(this.base, "/v1/models");
  }

  generate(payload: GenerateRequest): Promise<GenerateResponse> {
    return request(this.base, "/v1/generate", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  postScore(payload: ScorePayload): Promise<{ score_id: number }> {
    return request(this.base, "/v1/scores", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  reference(table: string): Promise<unknown> {
    return request(this.base, `/v1/reference/${table}`);
  }
}
