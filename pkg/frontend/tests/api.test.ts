import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

const jsonResponse = (body: unknown, status = 200) =>
  new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });

afterEach(() => vi.unstubAllGlobals());

describe("ApiClient", () => {
  it("posts generate payloads and returns the body", async () => {
    const fetchMock = vi.fn().mockResolvedValue(
      jsonResponse({ model: "m", seed: 7, samples: [] }),
    );
    vi.stubGlobal("fetch", fetchMock);
    const body = await new ApiClient("http://x").generate({
      model: "m",
      prompt: "नमस्ते",
      temperature: 1.0,
      top_p: 0.9,
      n: 3,
      max_new_tokens: 16,
    });
    expect(body.seed).toBe(7);
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe("http://x/v1/generate");
    expect(JSON.parse((init as RequestInit).body as string).prompt).toBe("नमस्ते");
  });

  it("maps HTTP errors to ApiError with status and detail", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn().mockResolvedValue(
        jsonResponse({ detail: { code: "model_not_found" } }, 404),
      ),
    );
    const err = await new ApiClient()
      .listModels()
      .then(() => null)
      .catch((e) => e as ApiError);
    expect(err).toBeInstanceOf(ApiError);
    expect(err?.status).toBe(404);
    expect((err?.detail as { code: string }).code).toBe("model_not_found");
  });

  it("wraps network failures", async () => {
    vi.stubGlobal("fetch", vi.fn().mockRejectedValue(new TypeError("refused")));
    await expect(new ApiClient().listModels()).rejects.toThrow(/cannot reach server/);
  });
});
