"""Corpus cleaning, deduplication, and train/validation splitting.

The cleaning pipeline runs a fixed, deterministic sequence of rules over raw
documents: Unicode NFC normalization, removal of links/emails/markup/phone
and ID patterns, removal of emoji and symbol blocks, removal of codepoints
outside the configured script ranges, and whitespace normalization. Sentence
splitting is a separate operation keyed on per-script terminators.

All operations here are pure functions over immutable inputs.
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scripts import DANDA, DOUBLE_DANDA, classify_codepoint

# Execution order is fixed; CleanConfig.enabled_rules only selects which of
# these run. sentence_split is not part of clean_text.
RULE_ORDER = (
    "unicode_normalize",
    "links_pii",
    "emoji_symbols",
    "foreign_literals",
    "whitespace",
)
ALL_RULES = RULE_ORDER + ("sentence_split",)

# Scripts that terminate sentences with danda; the rest use western marks.
_DANDA_SCRIPTS = ("Devanagari", "Bengali", "Odia")
_WESTERN_SCRIPTS = ("Tamil", "Telugu")

DEFAULT_TERMINATORS: dict[str, tuple[str, ...]] = {
    **{s: (DANDA, DOUBLE_DANDA) for s in _DANDA_SCRIPTS},
    **{s: (".", "?", "!") for s in _WESTERN_SCRIPTS},
}

# Punctuation kept by the range filter regardless of script block, expressed
# as degenerate intervals so the "every surviving codepoint is in-range"
# property stays checkable by a plain codepoint scan.
_RETAINED_PUNCT = "।॥.,?!‘’“”'\"-:;()"

_SCRIPT_BLOCKS: dict[str, tuple[tuple[int, int], ...]] = {
    "Devanagari": ((0x0900, 0x097F),),
    "Bengali": ((0x0980, 0x09FF),),
    "Odia": ((0x0B00, 0x0B7F),),
    "Tamil": ((0x0B80, 0x0BFF),),
    "Telugu": ((0x0C00, 0x0C7F),),
    "Roman": ((0x0041, 0x005A), (0x0061, 0x007A)),
}


@dataclass(frozen=True)
class RawDocument:
    id: str
    language: str
    script: str
    text: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be nonempty")


@dataclass(frozen=True)
class CleanConfig:
    """Cleaning rules plus the codepoint ranges allowed to survive."""

    enabled_rules: tuple[str, ...] = RULE_ORDER
    allowed_script_ranges: tuple[tuple[int, int], ...] = ()
    sentence_terminators: dict[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_TERMINATORS)
    )
    dedup_lines: bool = False

    def __post_init__(self):
        for rule in self.enabled_rules:
            if rule not in ALL_RULES:
                raise ValueError(f"unknown cleaning rule: {rule!r}")
        for script, terms in self.sentence_terminators.items():
            if not terms:
                raise ValueError(f"script {script!r} has no sentence terminators")

    def rule_enabled(self, rule: str) -> bool:
        return rule in self.enabled_rules


def default_clean_config(*scripts: str, dedup_lines: bool = False) -> CleanConfig:
    """Config allowing the given scripts (plus retained punctuation).

    With no arguments every known script block is allowed.
    """
    names = scripts or tuple(_SCRIPT_BLOCKS)
    ranges: list[tuple[int, int]] = []
    for name in names:
        try:
            ranges.extend(_SCRIPT_BLOCKS[name])
        except KeyError:
            raise KeyError(f"unknown script name: {name!r}") from None
    ranges.extend((ord(ch), ord(ch)) for ch in _RETAINED_PUNCT)
    return CleanConfig(
        allowed_script_ranges=tuple(sorted(set(ranges))), dedup_lines=dedup_lines
    )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction <= 1.0):
            raise ValueError("train_fraction must be in (0, 1]")


def split_sentences(text: str, script: str, config: CleanConfig) -> list[str]:
    """Split ``text`` into sentences on the script's terminator set.

    Terminators are retained at the end of each sentence; inter-sentence
    whitespace is stripped. Text with no terminator comes back as a single
    sentence. Unknown script names are a configuration error.
    """
    try:
        terminators = set(config.sentence_terminators[script])
    except KeyError:
        raise KeyError(f"no sentence terminators configured for script {script!r}") from None
    sentences: list[str] = []
    start = 0
    for i, ch in enumerate(text):
        if ch in terminators:
            piece = text[start : i + 1].strip()
            if piece:
                sentences.append(piece)
            start = i + 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


# Pattern notes: these are documented approximations. URL/email/tag removal
# is standard; phone numbers cover international/domestic digit groupings;
# ID numbers catch standalone runs of 10+ digits (Aadhaar-like); address
# removal is keyword-window based and knowingly lossy.
_URL_RE = re.compile(r"""(?:https?://|www\.)[^\s<>"']+""", re.IGNORECASE)
_EMAIL_RE = re.compile(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+")
_TAG_RE = re.compile(r"</?[A-Za-z][^<>]*>")
_PHONE_RE = re.compile(r"(?<!\d)(?:\+?\d{1,3}[-\s]?)?(?:\d[-\s]?){9,12}\d(?!\d)")
_LONG_ID_RE = re.compile(r"(?<!\d)\d{10,}(?!\d)")
_ADDRESS_RE = re.compile(
    r"(?:address|pin\s*code|pincode)\s*[:\-]?\s*[^\n।]*", re.IGNORECASE
)
_WS_RE = re.compile(r"\s+")

# Emoji and symbol blocks (step: emoji_symbols): emoticons, misc symbols and
# pictographs, transport/map, supplemental symbols, flags, dingbats, misc
# technical arrows.
_EMOJI_RANGES = (
    (0x1F300, 0x1F5FF),
    (0x1F600, 0x1F64F),
    (0x1F680, 0x1F6FF),
    (0x1F900, 0x1F9FF),
    (0x1FA70, 0x1FAFF),
    (0x1F1E6, 0x1F1FF),
    (0x2600, 0x27BF),
    (0x2190, 0x21FF),
    (0x2B00, 0x2BFF),
    (0xFE00, 0xFE0F),
)


def _in_ranges(cp: int, ranges) -> bool:
    return any(lo <= cp <= hi for lo, hi in ranges)


def clean_text(text: str, config: CleanConfig) -> str:
    """Run the enabled cleaning rules over ``text`` in the fixed order,
    repeating the pass until it reaches a fixed point (a removal can expose
    a new pattern, e.g. digit runs joined by a deleted emoji).

    Always returns a (possibly empty) string with no leading/trailing
    whitespace and no internal runs of more than one space when the
    whitespace rule is enabled.
    """
    s = text
    for _ in range(8):
        cleaned = _clean_pass(s, config)
        if cleaned == s:
            break
        s = cleaned
    return s


def _clean_pass(text: str, config: CleanConfig) -> str:
    s = text
    if config.rule_enabled("unicode_normalize"):
        s = unicodedata.normalize("NFC", s)
    if config.rule_enabled("links_pii"):
        s = _URL_RE.sub(" ", s)
        s = _EMAIL_RE.sub(" ", s)
        s = _TAG_RE.sub(" ", s)
        s = _ADDRESS_RE.sub(" ", s)
        s = _PHONE_RE.sub(" ", s)
        s = _LONG_ID_RE.sub(" ", s)
    if config.rule_enabled("emoji_symbols"):
        s = "".join(ch for ch in s if not _in_ranges(ord(ch), _EMOJI_RANGES))
    if config.rule_enabled("foreign_literals") and config.allowed_script_ranges:
        s = "".join(
            ch
            for ch in s
            if ch.isspace() or _in_ranges(ord(ch), config.allowed_script_ranges)
        )
    if config.rule_enabled("whitespace"):
        s = _WS_RE.sub(" ", s).strip()
    return s


def clean_document(doc: RawDocument, config: CleanConfig) -> RawDocument:
    return RawDocument(doc.id, doc.language, doc.script, clean_text(doc.text, config))


def _text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def deduplicate(docs: list[RawDocument], by_line: bool = False) -> list[RawDocument]:
    """Drop exact duplicate documents (first occurrence wins, order kept).

    With ``by_line`` each document additionally has its exact-duplicate lines
    removed (again first-wins, across the whole corpus).
    """
    seen: set[str] = set()
    out: list[RawDocument] = []
    seen_lines: set[str] = set()
    for doc in docs:
        text = doc.text
        if by_line:
            kept = []
            for line in text.split("\n"):
                key = _text_digest(line)
                if line.strip() and key in seen_lines:
                    continue
                seen_lines.add(key)
                kept.append(line)
            text = "\n".join(kept)
        key = _text_digest(text)
        if key in seen:
            continue
        seen.add(key)
        out.append(doc if text == doc.text else RawDocument(doc.id, doc.language, doc.script, text))
    return out


def split_train_val(
    docs: list[RawDocument], spec: SplitSpec
) -> tuple[list[RawDocument], list[RawDocument]]:
    """Seeded shuffle then cut at round(train_fraction * len(docs))."""
    if not docs:
        raise ValueError("cannot split an empty corpus")
    order = np.random.default_rng(spec.seed).permutation(len(docs))
    n_train = int(round(spec.train_fraction * len(docs)))
    train = [docs[i] for i in order[:n_train]]
    val = [docs[i] for i in order[n_train:]]
    return train, val


# ---------------------------------------------------------------------------
# Corpus IO: UTF-8 text files (one document per file) or JSONL records with
# {id, language, script, text}.


def read_documents(path: str | Path, language: str = "", script: str = "") -> list[RawDocument]:
    path = Path(path)
    docs: list[RawDocument] = []
    if path.is_dir():
        for file in sorted(path.glob("*.txt")):
            docs.append(
                RawDocument(file.stem, language, script, file.read_text(encoding="utf-8"))
            )
    else:
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                docs.append(
                    RawDocument(
                        str(rec["id"]),
                        rec.get("language", language),
                        rec.get("script", script),
                        rec["text"],
                    )
                )
    ids = [d.id for d in docs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate document ids in corpus")
    return docs


def write_documents(docs: list[RawDocument], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(
                json.dumps(
                    {"id": doc.id, "language": doc.language, "script": doc.script, "text": doc.text},
                    ensure_ascii=False,
                )
                + "\n"
            )


def corpus_stats(docs: list[RawDocument]) -> dict:
    """Document count, per-script codepoint histogram, and dedup ratio."""
    histogram: dict[str, int] = {}
    total_cp = 0
    for doc in docs:
        for ch in doc.text:
            if ch.isspace():
                continue
            name = classify_codepoint(ord(ch))
            histogram[name] = histogram.get(name, 0) + 1
            total_cp += 1
    distinct = len({_text_digest(d.text) for d in docs})
    return {
        "documents": len(docs),
        "codepoints": total_cp,
        "codepoint_histogram": dict(sorted(histogram.items())),
        "distinct_documents": distinct,
        "dedup_ratio": (distinct / len(docs)) if docs else 1.0,
    }
