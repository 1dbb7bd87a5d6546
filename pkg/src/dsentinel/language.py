"""Language identification by script class, then character-trigram profiles."""

from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from functools import lru_cache
from importlib import resources

from .htmltext import parse_page

UNDETERMINED = "und"
MIN_LETTERS = 12
MIN_SIMILARITY = 0.12

# (tag, predicate over code point) checked in order
_SCRIPTS = (
    ("kana", lambda c: 0x3040 <= c <= 0x30FF or 0x31F0 <= c <= 0x31FF or 0xFF66 <= c <= 0xFF9F),
    ("han", lambda c: 0x4E00 <= c <= 0x9FFF or 0x3400 <= c <= 0x4DBF),
    ("ko", lambda c: 0xAC00 <= c <= 0xD7AF or 0x1100 <= c <= 0x11FF),
    ("ru", lambda c: 0x0400 <= c <= 0x04FF),
    ("th", lambda c: 0x0E00 <= c <= 0x0E7F),
    ("ar", lambda c: 0x0600 <= c <= 0x06FF),
    ("he", lambda c: 0x0590 <= c <= 0x05FF),
    ("el", lambda c: 0x0370 <= c <= 0x03FF),
)


def _trigrams(text: str) -> Counter:
    grams: Counter = Counter()
    for word in "".join(ch if ch.isalpha() else " " for ch in text.lower()).split():
        padded = f" {word} "
        for i in range(len(padded) - 2):
            grams[padded[i:i + 3]] += 1
    return grams


@lru_cache(maxsize=1)
def _profiles() -> dict[str, tuple[Counter, float]]:
    raw = json.loads(resources.files("dsentinel").joinpath("data/language_samples.json").read_text("utf-8"))
    out = {}
    for lang, sample in raw.items():
        grams = _trigrams(sample)
        out[lang] = (grams, math.sqrt(sum(v * v for v in grams.values())))
    return out


def _script_counts(text: str) -> tuple[Counter, int]:
    counts: Counter = Counter()
    letters = 0
    for ch in text:
        if not (ch.isalpha() or unicodedata.category(ch) == "Lo"):
            continue
        letters += 1
        cp = ord(ch)
        for tag, pred in _SCRIPTS:
            if pred(cp):
                counts[tag] += 1
                break
        else:
            counts["latin"] += 1
    return counts, letters


def detect_language(text: str) -> str:
    """Return a BCP-47 primary tag, or ``"und"`` when confidence is too low."""
    counts, letters = _script_counts(text or "")
    if letters < MIN_LETTERS:
        return UNDETERMINED
    if counts["kana"] >= 0.05 * letters:
        return "ja"
    if counts["han"] >= 0.3 * letters:
        return "zh"
    for tag in ("ko", "ru", "th", "ar", "he", "el"):
        if counts[tag] >= 0.3 * letters:
            return tag
    grams = _trigrams(text)
    norm = math.sqrt(sum(v * v for v in grams.values()))
    if not norm:
        return UNDETERMINED
    best, best_score = UNDETERMINED, 0.0
    for lang, (profile, pnorm) in sorted(_profiles().items()):
        dot = sum(v * profile.get(g, 0) for g, v in grams.items())
        score = dot / (norm * pnorm)
        if score > best_score:
            best, best_score = lang, score
    return best if best_score >= MIN_SIMILARITY else UNDETERMINED


def detect_html_language(html: bytes | None) -> str:
    if not html:
        return UNDETERMINED
    page = parse_page(html)
    return detect_language(" ".join(filter(None, [page.title, page.text])))
