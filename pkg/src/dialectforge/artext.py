"""Arabic text processing: character classes, diacritic density, sentence
reconstruction, normalization, and word tokenization.

Character classes drive the density computation used to select richly
diacritized sentences for TTS synthesis. Density over a sentence is
100 * diacritic_count / n where n counts only Arabic letters and diacritics;
spaces, digits, Latin text, punctuation, and tatweel never enter n.
"""

from __future__ import annotations

import enum
import unicodedata
from dataclasses import dataclass


class CharClass(enum.Enum):
    ARABIC_LETTER = "arabic_letter"
    DIACRITIC = "diacritic"
    OTHER = "other"


def classify_char(c: str) -> CharClass:
    """Classify one Unicode scalar as ArabicLetter, Diacritic, or Other.

    Letters: U+0621-U+063A and U+0641-U+064A unconditionally, plus
    U+0671-U+06D3 when the general category is a Letter category.
    Diacritics: U+064B-U+0652, U+0653-U+0655, U+0670, U+06D6-U+06ED when the
    general category is a Mark category. Everything else, including the
    tatweel U+0640, is Other.
    """
    if len(c) != 1:
        raise ValueError(f"classify_char expects a single character, got {c!r}")
    cp = ord(c)
    if 0x0621 <= cp <= 0x063A or 0x0641 <= cp <= 0x064A:
        return CharClass.ARABIC_LETTER
    category = unicodedata.category(c)
    if 0x0671 <= cp <= 0x06D3 and category.startswith("L"):
        return CharClass.ARABIC_LETTER
    if (
        0x064B <= cp <= 0x0655 or cp == 0x0670 or 0x06D6 <= cp <= 0x06ED
    ) and category.startswith("M"):
        return CharClass.DIACRITIC
    return CharClass.OTHER


@dataclass
class DensityReport:
    """Per-sentence diacritic density.

    n counts ArabicLetter + Diacritic characters only. When n is 0 the
    sentence is degenerate (no Arabic content): density is reported as 0 and
    the sentence is never retained, whatever the threshold.
    """

    sentence: str
    n: int
    diacritic_count: int
    density_percent: float
    retained: bool
    degenerate: bool


def diacritic_density(sentence: str, threshold_percent: float = 0.0) -> DensityReport:
    """Compute the diacritic density of one sentence.

    retained is True iff n > 0 and density_percent >= threshold_percent.
    """
    letters = 0
    marks = 0
    for ch in sentence:
        cls = classify_char(ch)
        if cls is CharClass.ARABIC_LETTER:
            letters += 1
        elif cls is CharClass.DIACRITIC:
            marks += 1
    n = letters + marks
    density = 100.0 * marks / n if n > 0 else 0.0
    return DensityReport(
        sentence=sentence,
        n=n,
        diacritic_count=marks,
        density_percent=density,
        retained=n > 0 and density >= threshold_percent,
        degenerate=n == 0,
    )


def filter_by_density(
    sentences: list[str], threshold_percent: float
) -> tuple[list[str], list[DensityReport]]:
    """Keep sentences whose density meets the threshold, preserving order.

    Returns (retained sentences, one report per input sentence).
    """
    if not 0.0 <= threshold_percent <= 100.0:
        raise ValueError(
            f"threshold_percent must be in [0, 100], got {threshold_percent}"
        )
    reports = [diacritic_density(s, threshold_percent) for s in sentences]
    retained = [r.sentence for r in reports if r.retained]
    return retained, reports


def reconstruct_sentences(
    tokens: list[tuple[str, int, str]],
) -> list[tuple[str, str]]:
    """Reassemble (sentence_id, position, surface) tokens into sentences.

    Tokens are grouped by sentence_id, ordered by position within each
    sentence, and joined with single spaces. Sentence order follows the first
    appearance of each sentence_id in the input, so the result is invariant
    under permutations that preserve first appearances; position ordering
    makes the text itself invariant under any permutation.
    """
    groups: dict[str, dict[int, str]] = {}
    for sentence_id, position, surface in tokens:
        slots = groups.setdefault(sentence_id, {})
        if position in slots:
            raise ValueError(
                f"duplicate position {position} in sentence {sentence_id!r}"
            )
        slots[position] = surface
    return [
        (sentence_id, " ".join(slots[p] for p in sorted(slots)))
        for sentence_id, slots in groups.items()
    ]


@dataclass
class NormalizationPolicy:
    """Which normalization steps to apply before scoring.

    Diacritics are stripped by default: reference transcripts are typically
    undiacritized while TTS-pipeline text is diacritized, and WER across the
    two should not be dominated by mark mismatches.
    """

    strip_diacritics: bool = True
    remove_tatweel: bool = True
    collapse_whitespace: bool = True
    unify_alef_variants: bool = False
    strip_punctuation: bool = True

    def to_dict(self) -> dict[str, bool]:
        return {
            "strip_diacritics": self.strip_diacritics,
            "remove_tatweel": self.remove_tatweel,
            "collapse_whitespace": self.collapse_whitespace,
            "unify_alef_variants": self.unify_alef_variants,
            "strip_punctuation": self.strip_punctuation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationPolicy":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown normalization policy fields: {sorted(unknown)}")
        return cls(**known)


DEFAULT_POLICY = NormalizationPolicy()

# Hamza-above, hamza-below, madda, and wasla variants onto bare alef.
_ALEF_VARIANTS = {
    "أ": "ا",
    "إ": "ا",
    "آ": "ا",
    "ٱ": "ا",
}

_TATWEEL = "ـ"


def normalize(text: str, policy: NormalizationPolicy | None = None) -> str:
    """Apply the policy's enabled steps in fixed order.

    Order: strip punctuation, strip diacritics, remove tatweel, unify alef,
    collapse whitespace, trim. Punctuation becomes a space rather than
    vanishing so adjacent words do not fuse. Trimming is unconditional, which
    keeps normalize idempotent under every policy combination.
    """
    if policy is None:
        policy = DEFAULT_POLICY
    if policy.strip_punctuation:
        text = "".join(
            " " if unicodedata.category(ch)[0] in "PS" else ch for ch in text
        )
    if policy.strip_diacritics:
        text = "".join(
            ch for ch in text if classify_char(ch) is not CharClass.DIACRITIC
        )
    if policy.remove_tatweel:
        text = text.replace(_TATWEEL, "")
    if policy.unify_alef_variants:
        text = "".join(_ALEF_VARIANTS.get(ch, ch) for ch in text)
    if policy.collapse_whitespace:
        text = " ".join(text.split())
    return text.strip()


def tokenize_words(text: str) -> list[str]:
    """Split on Unicode whitespace runs; never yields empty tokens."""
    return text.split()
