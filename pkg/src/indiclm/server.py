"""HTTP generation and scoring service.

Endpoints (JSON over HTTP/1.1):
  GET  /v1/models               loaded model ids, config summaries, precision
  POST /v1/generate             sampled continuations for a prompt
  POST /v1/scores               append a human score to the store
  GET  /v1/scores               stored scores
  GET  /v1/scores/aggregate     per-model metric aggregates
  GET  /v1/scores/export        aggregate table as CSV
  GET  /v1/reference/{table}    bundled published result tables

Model weights are shared and immutable; each request owns its KV cache and
PRNG, so concurrent generation is safe. Scores funnel through a
single-writer append log. Setting INDICLM_API_TOKEN requires callers to
send it as a bearer token.
"""

from __future__ import annotations

import os
import secrets
import tempfile
from dataclasses import dataclass
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from . import evalkit, sampling
from .model import Parameters, count_params, fp32_matmul
from .quantize import QuantizedParameters, load_any_checkpoint, quantized_matmul_fn
from .tokenizer import TokenizerModel, load_tokenizer

AUTH_ENV_VAR = "INDICLM_API_TOKEN"


@dataclass
class ServedModel:
    model_id: str
    params: Parameters | QuantizedParameters
    tokenizer: TokenizerModel
    precision: str = "fp32"
    language: str = ""

    @property
    def matmul(self):
        if isinstance(self.params, QuantizedParameters):
            return quantized_matmul_fn(self.params)
        return fp32_matmul(self.params)

    def summary(self) -> dict:
        cfg = self.params.config
        return {
            "id": self.model_id,
            "precision": self.precision,
            "language": self.language,
            "params": count_params(cfg),
            "config": {
                "vocab_size": cfg.vocab_size,
                "d_model": cfg.d_model,
                "n_layers": cfg.n_layers,
                "n_heads": cfg.n_heads,
                "context_len": cfg.context_len,
            },
        }


def load_models_dir(models_dir: str | Path) -> dict[str, ServedModel]:
    """Pair every ``<id>.ckpt`` with ``<id>.tok`` in the directory."""
    registry: dict[str, ServedModel] = {}
    models_dir = Path(models_dir)
    for ckpt in sorted(models_dir.glob("*.ckpt")):
        model_id = ckpt.stem
        tok_path = ckpt.with_suffix(".tok")
        if not tok_path.exists():
            continue
        params, precision = load_any_checkpoint(ckpt)
        language = ""
        meta = ckpt.with_suffix(".json")
        if meta.exists():
            import json

            language = json.loads(meta.read_text()).get("language", "")
        registry[model_id] = ServedModel(
            model_id, params, load_tokenizer(tok_path), precision, language
        )
    return registry


class GenerateRequest(BaseModel):
    model: str
    prompt: str = Field(min_length=1)
    temperature: float = Field(default=1.0, ge=0.0)
    top_k: int | None = Field(default=None, ge=1)
    top_p: float | None = Field(default=0.9, gt=0.0, le=1.0)
    max_new_tokens: int = Field(default=64, ge=1, le=4096)
    n: int = Field(default=3, ge=1, le=16)
    seed: int | None = None


class ScoreRequest(BaseModel):
    prompt_id: str
    model_id: str
    sample_index: int = Field(ge=0)
    grammar: float = Field(ge=0.0, le=5.0)
    coherence: float = Field(ge=0.0, le=5.0)
    creativity: float = Field(ge=0.0, le=5.0)
    factuality: float = Field(ge=0.0, le=5.0)
    evaluator_id: str = "default"
    note: str | None = None


def _error(status: int, code: str, message: str, **extra):
    raise HTTPException(status, detail={"code": code, "message": message, **extra})


def build_app(
    registry: dict[str, ServedModel],
    score_store_path: str | Path | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    if not registry:
        raise ValueError("serve needs at least one loaded model")
    if score_store_path is None:
        score_store_path = Path(tempfile.gettempdir()) / "indiclm-scores.jsonl"
    store = evalkit.ScoreStore(score_store_path)
    app = FastAPI(title="indiclm", version="0.1.0")

    async def check_auth(request: Request):
        token = os.environ.get(AUTH_ENV_VAR)
        if not token:
            return
        supplied = request.headers.get("authorization", "")
        if supplied != f"Bearer {token}":
            _error(401, "unauthorized", "missing or invalid bearer token")

    dep = [Depends(check_auth)]

    @app.get("/v1/models", dependencies=dep)
    def list_models():
        return {"models": [m.summary() for m in registry.values()]}

    @app.post("/v1/generate", dependencies=dep)
    def generate(req: GenerateRequest):
        served = registry.get(req.model)
        if served is None:
            _error(404, "model_not_found", f"unknown model {req.model!r}",
                   available=sorted(registry))
        seed = req.seed if req.seed is not None else secrets.randbits(32)
        config = sampling.SamplerConfig(
            temperature=req.temperature,
            top_k=req.top_k,
            top_p=req.top_p,
            max_new_tokens=req.max_new_tokens,
            n_samples=req.n,
            seed=seed,
        )
        try:
            samples = sampling.generate(
                served.params, served.tokenizer, req.prompt, config, mm=served.matmul
            )
        except ValueError as exc:
            _error(400, "invalid_prompt", str(exc))
        return {
            "model": req.model,
            "seed": seed,
            "samples": [
                {
                    "index": s.index,
                    "text": s.text,
                    "tokens": s.token_count,
                    "seconds": s.seconds,
                }
                for s in samples
            ],
        }

    @app.post("/v1/scores", dependencies=dep)
    def post_score(req: ScoreRequest):
        score = evalkit.HumanScore(
            req.prompt_id, req.model_id, req.sample_index,
            req.grammar, req.coherence, req.creativity, req.factuality,
            req.evaluator_id, req.note,
        )
        stamped = store.append(score)
        return {"score_id": stamped.score_id}

    @app.get("/v1/scores", dependencies=dep)
    def get_scores():
        return {
            "scores": [
                {
                    "score_id": s.score_id,
                    "prompt_id": s.prompt_id,
                    "model_id": s.model_id,
                    "sample_index": s.sample_index,
                    **{m: s.metric(m) for m in evalkit.METRICS},
                    "evaluator_id": s.evaluator_id,
                    "note": s.note,
                }
                for s in store.load()
            ]
        }

    @app.get("/v1/scores/aggregate", dependencies=dep)
    def aggregate(n: int = 3):
        scores = store.load()
        if not scores:
            return {"n": n, "models": {}}
        try:
            table = evalkit.aggregate_scores(scores, n)
        except evalkit.MissingSamplesError as exc:
            _error(409, "incomplete_scores", str(exc))
        return {"n": n, "models": table.aggregates}

    @app.get("/v1/scores/export", dependencies=dep)
    def export(n: int = 3):
        scores = store.load()
        if not scores:
            return PlainTextResponse("model," + ",".join(evalkit.METRICS) + "\r\n",
                                     media_type="text/csv")
        try:
            table = evalkit.aggregate_scores(scores, n)
        except evalkit.MissingSamplesError as exc:
            _error(409, "incomplete_scores", str(exc))
        import io

        buf = io.StringIO()
        import csv as _csv

        writer = _csv.writer(buf)
        writer.writerow(("model",) + evalkit.METRICS)
        for model in sorted(table.aggregates):
            row = table.aggregates[model]
            writer.writerow([model] + [f"{row[m]:.5f}" for m in evalkit.METRICS])
        return PlainTextResponse(buf.getvalue(), media_type="text/csv")

    @app.get("/v1/reference/{table}", dependencies=dep)
    def reference(table: str):
        try:
            return evalkit.load_reference(table)
        except KeyError as exc:
            _error(404, "reference_not_found", str(exc))

    @app.get("/v1/reference", dependencies=dep)
    def reference_index():
        return evalkit.reference_manifest()

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=str(ui_dir), html=True), name="app")

    return app


def serve_http(
    registry: dict[str, ServedModel],
    bind: str = "127.0.0.1:8000",
    score_store_path: str | Path | None = None,
    ui_dir: str | Path | None = None,
):
    """Run the service with uvicorn (blocking)."""
    import uvicorn

    host, _, port = bind.partition(":")
    app = build_app(registry, score_store_path, ui_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="warning")
