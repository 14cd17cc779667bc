"""Evaluation: perplexity reports, human-score aggregation, reference data.

Human evaluation follows the four-metric protocol (grammar, coherence,
creativity, factuality; each 0..5, where factuality may be 0 when the
premise could not be verified). A model's aggregate per metric is the mean
over prompts of the per-prompt mean of its top-n sample scores, averaged
over evaluators. Published result tables ship as read-only reference JSON
under ``reference/`` and are served verbatim; they are display data, never
assertion targets.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as M
from .tokenizer import encode as tok_encode

METRICS = ("grammar", "coherence", "creativity", "factuality")


@dataclass(frozen=True)
class GenerationRecord:
    prompt_id: str
    prompt: str
    model_id: str
    sample_index: int
    text: str
    sampler: dict = field(default_factory=dict)

    def key(self) -> tuple[str, str, int]:
        return (self.prompt_id, self.model_id, self.sample_index)


@dataclass(frozen=True)
class HumanScore:
    prompt_id: str
    model_id: str
    sample_index: int
    grammar: float
    coherence: float
    creativity: float
    factuality: float
    evaluator_id: str = "default"
    note: str | None = None
    score_id: int | None = None

    def __post_init__(self):
        for metric in METRICS:
            value = getattr(self, metric)
            if not (0.0 <= value <= 5.0):
                raise ValueError(f"{metric} must be within [0, 5], got {value}")

    def metric(self, name: str) -> float:
        return float(getattr(self, name))


@dataclass
class EvalTable:
    aggregates: dict[str, dict[str, float]]
    provenance: dict[str, list[int]]
    n: int


class MissingSamplesError(ValueError):
    def __init__(self, gaps):
        self.gaps = gaps
        detail = "; ".join(
            f"model={m} prompt={p} evaluator={e}: has {found} of {want} samples"
            for m, p, e, found, want in gaps[:10]
        )
        super().__init__(f"incomplete score sets: {detail}")


def aggregate_scores(scores: list[HumanScore], n: int = 3) -> EvalTable:
    """Mean over prompts of (mean over the n samples, averaged over
    evaluators), per model and metric. Every (model, prompt, evaluator)
    group must hold exactly n distinct sample indexes."""
    groups: dict[tuple[str, str, str], list[HumanScore]] = {}
    for s in scores:
        groups.setdefault((s.model_id, s.prompt_id, s.evaluator_id), []).append(s)

    gaps = []
    for (model, prompt, evaluator), bucket in sorted(groups.items()):
        indexes = {s.sample_index for s in bucket}
        if len(indexes) != n or len(bucket) != n:
            gaps.append((model, prompt, evaluator, len(bucket), n))
    if gaps:
        raise MissingSamplesError(gaps)

    by_model_prompt: dict[str, dict[str, list[dict[str, float]]]] = {}
    provenance: dict[str, list[int]] = {}
    for (model, prompt, evaluator), bucket in sorted(groups.items()):
        eval_means = {m: float(np.mean([s.metric(m) for s in bucket])) for m in METRICS}
        by_model_prompt.setdefault(model, {}).setdefault(prompt, []).append(eval_means)
        provenance.setdefault(model, []).extend(
            s.score_id for s in bucket if s.score_id is not None
        )

    aggregates: dict[str, dict[str, float]] = {}
    for model, prompts in by_model_prompt.items():
        per_metric: dict[str, float] = {}
        for metric in METRICS:
            prompt_means = [
                float(np.mean([em[metric] for em in evaluator_means]))
                for evaluator_means in prompts.values()
            ]
            per_metric[metric] = float(np.mean(prompt_means))
        aggregates[model] = per_metric
    return EvalTable(aggregates, provenance, n)


def normalize_score(a: float, a_min: float, a_max: float) -> float:
    """Min-max normalization onto [0, 1]."""
    if not a_max > a_min:
        raise ValueError(f"degenerate range: a_min={a_min}, a_max={a_max}")
    if not (a_min <= a <= a_max):
        raise ValueError(f"a={a} outside [{a_min}, {a_max}]")
    return (a - a_min) / (a_max - a_min)


def export_eval(table: EvalTable, path: str | Path) -> None:
    """CSV with one row per model; values printed with 5 decimal places."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("model",) + METRICS)
        for model in sorted(table.aggregates):
            row = table.aggregates[model]
            writer.writerow([model] + [f"{row[m]:.5f}" for m in METRICS])


def import_eval(path: str | Path, n: int = 3) -> EvalTable:
    aggregates: dict[str, dict[str, float]] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != ("model",) + METRICS:
            raise ValueError(f"unexpected CSV header: {header}")
        for row in reader:
            aggregates[row[0]] = {m: float(v) for m, v in zip(METRICS, row[1:])}
    return EvalTable(aggregates, {}, n)


# ---------------------------------------------------------------------------
# perplexity over a held-out corpus


def perplexity_report(params: M.Parameters, tokenizer, val_texts, model_id: str = "model") -> dict:
    """Token-weighted mean NLL over the corpus, exponentiated.

    Documents are encoded with a leading bos and scored in context-sized
    windows; the report carries token count and elapsed seconds."""
    cfg = params.config
    t0 = time.perf_counter()
    total_nll = 0.0
    total_tokens = 0
    for text in val_texts:
        ids = [tokenizer.bos_id] + tok_encode(tokenizer, text)
        for start in range(0, len(ids) - 1, cfg.context_len):
            window = np.asarray(ids[start : start + cfg.context_len + 1], np.int64)
            if window.size < 2:
                break
            out = M.forward(params, window[:-1], targets=window[1:])
            positions = window.size - 1
            total_nll += out.loss * positions
            total_tokens += positions
    if total_tokens == 0:
        raise ValueError("validation corpus contains no scorable tokens")
    avg_loss = total_nll / total_tokens
    return {
        "model_id": model_id,
        "perplexity": M.perplexity(avg_loss),
        "avg_loss": avg_loss,
        "token_count": total_tokens,
        "elapsed_s": time.perf_counter() - t0,
    }


def unigram_perplexity(train_ids, val_ids, vocab_size: int, alpha: float = 1.0) -> float:
    """Laplace-smoothed unigram baseline on the same tokenization."""
    train_ids = np.asarray(train_ids, np.int64)
    val_ids = np.asarray(val_ids, np.int64)
    counts = np.bincount(train_ids, minlength=vocab_size).astype(np.float64)
    probs = (counts + alpha) / (counts.sum() + alpha * vocab_size)
    nll = -np.log(probs[val_ids])
    return float(np.exp(nll.mean()))


# ---------------------------------------------------------------------------
# append-only score store (single writer)


class ScoreStore:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, score: HumanScore) -> HumanScore:
        with self._lock:
            next_id = sum(1 for _ in self._iter_lines())
            stamped = HumanScore(
                score.prompt_id, score.model_id, score.sample_index,
                score.grammar, score.coherence, score.creativity, score.factuality,
                score.evaluator_id, score.note, next_id,
            )
            record = {
                "score_id": stamped.score_id,
                "prompt_id": stamped.prompt_id,
                "model_id": stamped.model_id,
                "sample_index": stamped.sample_index,
                **{m: stamped.metric(m) for m in METRICS},
                "evaluator_id": stamped.evaluator_id,
                "note": stamped.note,
            }
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        return stamped

    def _iter_lines(self):
        if not self.path.exists():
            return
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    yield line

    def load(self) -> list[HumanScore]:
        out = []
        for line in self._iter_lines():
            rec = json.loads(line)
            out.append(
                HumanScore(
                    rec["prompt_id"], rec["model_id"], rec["sample_index"],
                    rec["grammar"], rec["coherence"], rec["creativity"],
                    rec["factuality"], rec.get("evaluator_id", "default"),
                    rec.get("note"), rec.get("score_id"),
                )
            )
        return out


# ---------------------------------------------------------------------------
# bundled reference tables (read-only display data)


def reference_manifest() -> dict:
    return _load_reference_file("manifest.json")


def load_reference(table: str) -> dict:
    manifest = reference_manifest()
    if table not in manifest["tables"]:
        raise KeyError(f"unknown reference table {table!r}; have {sorted(manifest['tables'])}")
    return _load_reference_file(f"{table}.json")


def _load_reference_file(name: str) -> dict:
    resource = importlib.resources.files("indiclm").joinpath("reference").joinpath(name)
    return json.loads(resource.read_text(encoding="utf-8"))
