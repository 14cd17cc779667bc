"""Instruction datasets: human records, machine translation, self-instruct.

Prompt rendering follows the three-header layout (instruction / optional
input / response) with per-language header tables for Bangla, Hindi, Tamil
and Telugu plus a neutral default. The rendered response span is exact so
fine-tuning can mask the loss to response characters only.

Translation goes through an injectable client; failures are recorded per
record and never abort a batch. Self-instruct proposes new instructions by
prompting a model with sampled seed tasks and rejects candidates that
overlap an accepted or seed instruction too strongly (word-trigram Jaccard).
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

SOURCES = ("human", "translated", "self_instruct")


@dataclass(frozen=True)
class InstructionExample:
    instruction: str
    input: str | None
    response: str
    language: str
    source: str = "human"

    def __post_init__(self):
        if not self.instruction or not self.response:
            raise ValueError("instruction and response must be nonempty")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")

    def key(self) -> tuple[str, str, str]:
        return (self.instruction, self.input or "", self.response)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    header_instruction: str
    header_input: str
    header_response: str
    separator: str = "\n\n"


TEMPLATES: dict[str, PromptTemplate] = {
    "bangla": PromptTemplate(
        "bangla", "### নির্দেশ: ", "ইনপুট:\n\n", "উত্তর: "
    ),
    "hindi": PromptTemplate(
        "hindi", "### अनुदेश: ", "इनपुट:\n\n", "उत्तर: "
    ),
    "tamil": PromptTemplate(
        "tamil", "அறிவுறுத்தல்:\n\n", "உள்ளீடு:\n\n", "பதில்: "
    ),
    "telugu": PromptTemplate(
        "telugu", "సూచన:\n\n", "ఇన్పుట్:\n\n", "సమాధానం: "
    ),
    "default": PromptTemplate(
        "default", "### Instruction: ", "Input:\n\n", "Response: "
    ),
}


def template_for(name: str) -> PromptTemplate:
    try:
        return TEMPLATES[name]
    except KeyError:
        raise KeyError(
            f"unknown template {name!r}; available: {sorted(TEMPLATES)}"
        ) from None


def render_prompt(
    example: InstructionExample,
    template: PromptTemplate,
    include_response: bool = True,
) -> tuple[str, tuple[int, int]]:
    """Render headers + fields; returns (text, response character span).

    The span delimits exactly the response characters; with
    include_response=False it is empty and the text ends at the response
    header.
    """
    text = template.header_instruction + example.instruction
    if example.input:
        text += template.separator + template.header_input + example.input
    text += template.separator + template.header_response
    start = len(text)
    if include_response:
        text += example.response
    return text, (start, len(text))


# ---------------------------------------------------------------------------
# translation


class TranslationError(Exception):
    pass


class IdentityTranslationClient:
    """Deterministic mock: returns the text unchanged."""

    rate_limit_per_sec: float | None = None

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        return text


class HttpTranslationClient:
    """POST {q, source, target} -> {translatedText}. The bearer token comes
    from the INDICLM_TRANSLATE_TOKEN environment variable when set."""

    def __init__(self, endpoint: str, rate_limit_per_sec: float | None = None,
                 timeout: float = 30.0, session=None):
        self.endpoint = endpoint
        self.rate_limit_per_sec = rate_limit_per_sec
        self.timeout = timeout
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        headers = {}
        token = os.environ.get("INDICLM_TRANSLATE_TOKEN")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        resp = self._session.post(
            self.endpoint,
            json={"q": text, "source": source_lang, "target": target_lang},
            headers=headers,
            timeout=self.timeout,
        )
        if resp.status_code != 200:
            raise TranslationError(f"translation endpoint returned {resp.status_code}")
        return resp.json()["translatedText"]


@dataclass
class TranslationFailure:
    index: int
    example: InstructionExample
    error: str


def translate_dataset(
    examples: list[InstructionExample],
    client,
    target_lang: str,
    max_retries: int = 3,
    backoff_s: float = 0.05,
    sleep=time.sleep,
) -> tuple[list[InstructionExample], list[TranslationFailure]]:
    """Translate instruction/input/response per record.

    Retries with exponential backoff up to max_retries; per-record failures
    are collected and the batch continues. Raises only when every record
    failed. Respects client.rate_limit_per_sec by pacing calls.
    """
    min_interval = None
    rate = getattr(client, "rate_limit_per_sec", None)
    if rate:
        min_interval = 1.0 / rate
    last_call = 0.0

    def call(text: str, source_lang: str) -> str:
        nonlocal last_call
        attempt = 0
        while True:
            if min_interval is not None:
                wait = last_call + min_interval - time.monotonic()
                if wait > 0:
                    sleep(wait)
            last_call = time.monotonic()
            try:
                return client.translate(text, source_lang, target_lang)
            except Exception as exc:
                attempt += 1
                if attempt > max_retries:
                    raise TranslationError(str(exc)) from exc
                sleep(backoff_s * (2 ** (attempt - 1)))

    translated: list[InstructionExample] = []
    failures: list[TranslationFailure] = []
    for idx, ex in enumerate(examples):
        try:
            new_instruction = call(ex.instruction, ex.language)
            new_input = call(ex.input, ex.language) if ex.input else ex.input
            new_response = call(ex.response, ex.language)
        except TranslationError as exc:
            failures.append(TranslationFailure(idx, ex, str(exc)))
            continue
        translated.append(
            InstructionExample(new_instruction, new_input, new_response,
                               target_lang, "translated")
        )
    if examples and not translated:
        detail = "; ".join(f"#{f.index}: {f.error}" for f in failures[:5])
        raise TranslationError(f"every record failed translation ({detail})")
    return translated, failures


# ---------------------------------------------------------------------------
# self-instruct


def word_ngrams(text: str, n: int = 3) -> frozenset:
    words = text.split()
    if len(words) < n:
        return frozenset([tuple(words)]) if words else frozenset()
    return frozenset(tuple(words[i : i + n]) for i in range(len(words) - n + 1))


def ngram_overlap(a: str, b: str, n: int = 3) -> float:
    ga, gb = word_ngrams(a, n), word_ngrams(b, n)
    if not ga or not gb:
        return 0.0
    return len(ga & gb) / len(ga | gb)


def max_overlap(candidate: str, accepted: list[str], n: int = 3) -> float:
    return max((ngram_overlap(candidate, ref, n) for ref in accepted), default=0.0)


class SelfInstructError(Exception):
    pass


def _self_instruct_prompt(seeds: list[InstructionExample], template: PromptTemplate) -> str:
    parts = [template.header_instruction + s.instruction for s in seeds]
    parts.append(template.header_instruction.rstrip())
    return template.separator.join(parts)


def _parse_candidates(text: str, template: PromptTemplate) -> list[str]:
    marker = template.header_instruction.strip()
    lines = []
    for raw in text.split("\n"):
        line = raw.strip()
        if line.startswith(marker):
            line = line[len(marker) :].strip()
        if line:
            lines.append(line)
    return lines[:1]


def self_instruct_generate(
    params,
    tokenizer,
    seed_tasks: list[InstructionExample],
    count: int,
    sampler,
    similarity_threshold: float = 0.7,
    template: PromptTemplate | None = None,
    max_attempts: int | None = None,
    generate_fn=None,
) -> list[InstructionExample]:
    """Bootstrap up to ``count`` new instructions from seed tasks.

    Candidates whose max word-trigram overlap with any seed or accepted
    instruction is >= similarity_threshold are rejected. Raises after the
    attempt budget if nothing was accepted, reporting rejection statistics.
    """
    if not seed_tasks:
        raise ValueError("seed_tasks must be nonempty")
    from . import sampling

    if generate_fn is None:
        def generate_fn(prompt, cfg):
            return [s.text for s in sampling.generate(params, tokenizer, prompt, cfg)]

    template = template or template_for("default")
    language = seed_tasks[0].language
    max_attempts = max_attempts or count * 10
    rng = np.random.default_rng(sampler.seed)
    references = [s.instruction for s in seed_tasks]
    accepted: list[InstructionExample] = []
    stats = {"attempts": 0, "parsed": 0, "rejected_overlap": 0, "rejected_empty": 0}

    while len(accepted) < count and stats["attempts"] < max_attempts:
        stats["attempts"] += 1
        picks = rng.choice(len(seed_tasks), size=min(3, len(seed_tasks)), replace=False)
        prompt = _self_instruct_prompt([seed_tasks[i] for i in picks], template)
        step_cfg = replace(sampler, seed=sampler.seed + stats["attempts"], n_samples=1)
        for text in generate_fn(prompt, step_cfg):
            for candidate in _parse_candidates(text, template):
                stats["parsed"] += 1
                if max_overlap(candidate, references) >= similarity_threshold:
                    stats["rejected_overlap"] += 1
                    continue
                response_prompt = (
                    template.header_instruction + candidate
                    + template.separator + template.header_response
                )
                responses = generate_fn(response_prompt, step_cfg)
                response = responses[0].strip() if responses else ""
                if not response:
                    stats["rejected_empty"] += 1
                    continue
                accepted.append(
                    InstructionExample(candidate, None, response, language, "self_instruct")
                )
                references.append(candidate)
                if len(accepted) >= count:
                    break
            if len(accepted) >= count:
                break
    if not accepted:
        raise SelfInstructError(f"no candidates accepted; stats: {stats}")
    return accepted


# ---------------------------------------------------------------------------
# dataset assembly and IO


def build_dataset(
    human: list[InstructionExample],
    translated: list[InstructionExample],
    self_gen: list[InstructionExample],
    seed: int = 0,
) -> tuple[list[InstructionExample], dict]:
    """Concatenate, drop exact duplicate triples, shuffle with the seed.

    The manifest records per-source input counts, drops, and the output
    size (counts sum to size + drops)."""
    combined = list(human) + list(translated) + list(self_gen)
    seen: set[tuple[str, str, str]] = set()
    deduped: list[InstructionExample] = []
    for ex in combined:
        if ex.key() in seen:
            continue
        seen.add(ex.key())
        deduped.append(ex)
    order = np.random.default_rng(seed).permutation(len(deduped))
    shuffled = [deduped[i] for i in order]
    manifest = {
        "human": len(human),
        "translated": len(translated),
        "self_instruct": len(self_gen),
        "duplicates_dropped": len(combined) - len(deduped),
        "total": len(shuffled),
        "seed": seed,
    }
    return shuffled, manifest


def save_dataset(examples: list[InstructionExample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {
                        "instruction": ex.instruction,
                        "input": ex.input or "",
                        "output": ex.response,
                        "lang": ex.language,
                        "source": ex.source,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_dataset(path: str | Path) -> list[InstructionExample]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(
                InstructionExample(
                    rec["instruction"],
                    rec.get("input") or None,
                    rec["output"],
                    rec.get("lang", ""),
                    rec.get("source", "human"),
                )
            )
    return out
