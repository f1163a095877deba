"""Error taxonomy over evaluation alignments.

Three detectors, all heuristic and all parameterized, with the parameters
embedded in every report so results stay interpretable:

  language failure   hypothesis empty after normalization, or fewer than half
                     of its letter-category characters are Arabic script, or
                     the backend tagged a non-Arabic language
  hallucination      normalized hypothesis more than twice the reference
                     length, or a 3-token phrase repeated 3+ times in a row
  char confusions    substitution pairs from character alignments, with
                     insertions and deletions keyed against "(epsilon)" so all
                     three edit kinds rank in one chart

Absence is the literal one-character string EPSILON below, in JSON and CSV
alike.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass

from .artext import CharClass, classify_char, normalize, tokenize_words
from .metrics import MATCH, EditAlignment, EvalReport, edit_distance

EPSILON = "ε"


def _is_arabic_tag(tag: str) -> bool:
    lowered = tag.lower()
    return lowered == "ar" or lowered.startswith("ar-")


def detect_language_failure(
    hyp: str,
    backend_language: str | None = None,
    script_fraction_threshold: float = 0.5,
) -> bool:
    """True when the hypothesis is in the wrong language or script.

    Fires when the normalized hypothesis is empty, when the Arabic fraction
    among letter-category characters falls below the threshold (no letters at
    all counts as fraction 0), or when the backend reported a non-Arabic
    language tag.
    """
    if backend_language is not None and not _is_arabic_tag(backend_language):
        return True
    normalized = normalize(hyp)
    if not normalized:
        return True
    letters = [ch for ch in normalized if ch.isalpha()]
    if not letters:
        return True
    arabic = sum(1 for ch in letters if classify_char(ch) is CharClass.ARABIC_LETTER)
    return arabic / len(letters) < script_fraction_threshold


def detect_hallucination(
    ref: str,
    hyp: str,
    length_ratio_threshold: float = 2.0,
    ngram: int = 3,
    repeats: int = 3,
) -> bool:
    """True when the hypothesis is unsupported by the reference.

    Fires on normalized character length ratio strictly above the threshold,
    or on a token n-gram repeated at least `repeats` times consecutively.
    """
    norm_ref = normalize(ref)
    norm_hyp = normalize(hyp)
    if len(norm_hyp) / max(1, len(norm_ref)) > length_ratio_threshold:
        return True
    tokens = tokenize_words(norm_hyp)
    window = ngram * repeats
    for start in range(0, len(tokens) - window + 1):
        first = tokens[start : start + ngram]
        if all(
            tokens[start + k * ngram : start + (k + 1) * ngram] == first
            for k in range(1, repeats)
        ):
            return True
    return False


def confusion_counter(alignments: list[EditAlignment]) -> Counter:
    """Counter over (ref_char, hyp_char) pairs for every non-match op."""
    counts: Counter = Counter()
    for alignment in alignments:
        for op in alignment.ops:
            if op.kind == MATCH:
                continue
            counts[(op.ref_unit or EPSILON, op.hyp_unit or EPSILON)] += 1
    return counts


def char_confusions(
    alignments: list[EditAlignment], top_n: int = 20
) -> list[tuple[str, str, int]]:
    """Top confusion pairs: count descending, ties by code point pair."""
    counts = confusion_counter(alignments)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [(ref, hyp, count) for (ref, hyp), count in ranked[:top_n]]


@dataclass
class ErrorReport:
    total: int
    language_failure_ids: list[str]
    hallucination_ids: list[str]
    confusion_top: list[tuple[str, str, int]]
    heuristic_params: dict

    @property
    def language_failure_count(self) -> int:
        return len(self.language_failure_ids)

    @property
    def hallucination_count(self) -> int:
        return len(self.hallucination_ids)

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "language_failures": {
                "count": self.language_failure_count,
                "ids": self.language_failure_ids,
            },
            "hallucinations": {
                "count": self.hallucination_count,
                "ids": self.hallucination_ids,
            },
            "confusion_top": [list(row) for row in self.confusion_top],
            "heuristic_params": self.heuristic_params,
        }

    def save(self, path: str, csv_path: str | None = None) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json_dict(), handle, ensure_ascii=False, indent=2)
            handle.write("\n")
        if csv_path is not None:
            self.save_confusions_csv(csv_path)

    def save_confusions_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["ref_char", "hyp_char", "count"])
            writer.writerows(self.confusion_top)

    @classmethod
    def load(cls, path: str) -> "ErrorReport":
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
        return cls(
            total=data["total"],
            language_failure_ids=data["language_failures"]["ids"],
            hallucination_ids=data["hallucinations"]["ids"],
            confusion_top=[tuple(row) for row in data["confusion_top"]],
            heuristic_params=data["heuristic_params"],
        )


def build_error_report(
    eval_report: EvalReport,
    backend_languages: dict[str, str] | None = None,
    top_n: int = 20,
    length_ratio_threshold: float = 2.0,
    script_fraction_threshold: float = 0.5,
) -> ErrorReport:
    """Run both detectors per utterance and aggregate character confusions.

    Stored character alignments are used when the evaluation kept them;
    otherwise they are recomputed from the stored normalized ref/hyp with the
    same deterministic tie-breaking, so reports scored without alignments
    analyze identically.
    """
    backend_languages = backend_languages or {}
    language_failure_ids = []
    hallucination_ids = []
    alignments = []
    for score in eval_report.per_utterance:
        if detect_language_failure(
            score.hyp,
            backend_languages.get(score.id),
            script_fraction_threshold,
        ):
            language_failure_ids.append(score.id)
        if detect_hallucination(
            score.ref, score.hyp, length_ratio_threshold
        ):
            hallucination_ids.append(score.id)
        alignment = score.char_alignment
        if alignment is None:
            _, alignment = edit_distance(score.ref, score.hyp)
        alignments.append(alignment)
    return ErrorReport(
        total=len(eval_report.per_utterance),
        language_failure_ids=language_failure_ids,
        hallucination_ids=hallucination_ids,
        confusion_top=char_confusions(alignments, top_n),
        heuristic_params={
            "top_n": top_n,
            "length_ratio_threshold": length_ratio_threshold,
            "script_fraction_threshold": script_fraction_threshold,
            "ngram": 3,
            "repeats": 3,
            "epsilon": EPSILON,
        },
    )
