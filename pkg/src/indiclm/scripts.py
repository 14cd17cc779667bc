"""Unicode script profiles for the writing systems this toolkit targets.

A profile names a script and the codepoint intervals that belong to it.
Profiles drive pre-tokenization boundaries, corpus cleaning ranges, and
script detection. Intervals are inclusive on both ends.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ScriptProfile:
    """A named script with non-overlapping codepoint intervals."""

    name: str
    ranges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        spans = sorted(self.ranges)
        for (a_lo, a_hi), (b_lo, b_hi) in zip(spans, spans[1:]):
            if b_lo <= a_hi:
                raise ValueError(
                    f"overlapping ranges in profile {self.name!r}: "
                    f"{(a_lo, a_hi)} and {(b_lo, b_hi)}"
                )
        for lo, hi in self.ranges:
            if lo > hi:
                raise ValueError(f"empty range {(lo, hi)} in profile {self.name!r}")

    def contains(self, codepoint: int) -> bool:
        return any(lo <= codepoint <= hi for lo, hi in self.ranges)


# Danda/double danda live in the Devanagari block but terminate sentences in
# Bengali and Odia as well, so Bengali/Odia profiles claim them too would
# overlap; instead they stay Devanagari-owned and cleaning configs list them
# as retained punctuation separately.
DEVANAGARI = ScriptProfile(
    "Devanagari", ((0x0900, 0x097F), (0xA8E0, 0xA8FF), (0x1CD0, 0x1CFF))
)
BENGALI = ScriptProfile("Bengali", ((0x0980, 0x09FF),))
ODIA = ScriptProfile("Odia", ((0x0B00, 0x0B7F),))
TAMIL = ScriptProfile("Tamil", ((0x0B80, 0x0BFF),))
TELUGU = ScriptProfile("Telugu", ((0x0C00, 0x0C7F),))
ROMAN = ScriptProfile("Roman", ((0x0041, 0x005A), (0x0061, 0x007A)))

DEFAULT_PROFILES: tuple[ScriptProfile, ...] = (
    DEVANAGARI,
    BENGALI,
    ODIA,
    TAMIL,
    TELUGU,
    ROMAN,
)

OTHER = "Other"

DANDA = "।"
DOUBLE_DANDA = "॥"


def classify_codepoint(cp: int, profiles=DEFAULT_PROFILES) -> str:
    """Return the profile name owning ``cp``, or ``Other``."""
    for profile in profiles:
        if profile.contains(cp):
            return profile.name
    return OTHER


def detect_script(text: str, profiles=DEFAULT_PROFILES) -> dict[str, float]:
    """Fraction of non-whitespace codepoints per script.

    Codepoints outside every profile are counted under ``Other``. Fractions
    sum to 1 for non-empty input; empty/whitespace-only input yields {}.
    """
    counts: dict[str, int] = {}
    total = 0
    for ch in text:
        if ch.isspace():
            continue
        name = classify_codepoint(ord(ch), profiles)
        counts[name] = counts.get(name, 0) + 1
        total += 1
    if total == 0:
        return {}
    return {name: n / total for name, n in counts.items()}


def profile_by_name(name: str, profiles=DEFAULT_PROFILES) -> ScriptProfile:
    for profile in profiles:
        if profile.name == name:
            return profile
    raise KeyError(f"unknown script profile: {name!r}")
