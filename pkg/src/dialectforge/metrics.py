"""Edit distance, alignment extraction, and WER/CER scoring.

Distances are unit-cost Levenshtein. Corpus WER/CER are micro-averages:
100 * total edits / total reference units, so values can exceed 100.
Character scoring runs over the normalized strings with their single
collapsed spaces included as characters, making word-boundary errors visible
at character level.

Three distance routes, all required to agree (tests enforce it):
  edit_distance          full matrix + deterministic traceback, for alignments
  levenshtein_distance   two-row scalar DP, memory linear in the shorter side
  batch scoring          vectorized row DP across many padded pairs at once
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artext import DEFAULT_POLICY, NormalizationPolicy, normalize, tokenize_words

MATCH = "match"
SUBSTITUTE = "substitute"
DELETE = "delete"
INSERT = "insert"


@dataclass
class EditOp:
    """One alignment step. Match/Substitute carry both units, Delete only
    ref_unit, Insert only hyp_unit."""

    kind: str
    ref_unit: str | None
    hyp_unit: str | None

    def to_list(self) -> list:
        return [self.kind, self.ref_unit, self.hyp_unit]


@dataclass
class EditAlignment:
    ops: list[EditOp]

    def cost(self) -> int:
        return sum(1 for op in self.ops if op.kind != MATCH)

    def to_lists(self) -> list[list]:
        return [op.to_list() for op in self.ops]

    @classmethod
    def from_lists(cls, rows: list[list]) -> "EditAlignment":
        return cls(ops=[EditOp(kind, ref, hyp) for kind, ref, hyp in rows])


def _distance_matrix(ref, hyp) -> np.ndarray:
    """Full (len(ref)+1) x (len(hyp)+1) DP matrix, rows filled vectorized."""
    m, n = len(ref), len(hyp)
    matrix = np.empty((m + 1, n + 1), dtype=np.int32)
    offsets = np.arange(n + 1, dtype=np.int32)
    matrix[0] = offsets
    if n == 0:
        matrix[:, 0] = np.arange(m + 1, dtype=np.int32)
        return matrix
    vocab: dict = {}

    def code(unit):
        value = vocab.get(unit)
        if value is None:
            value = len(vocab)
            vocab[unit] = value
        return value

    hyp_codes = np.fromiter((code(u) for u in hyp), dtype=np.int64, count=n)
    ref_codes = [code(u) for u in ref]
    for i in range(1, m + 1):
        prev = matrix[i - 1]
        cand = np.minimum(prev[:-1] + (hyp_codes != ref_codes[i - 1]), prev[1:] + 1)
        shifted = np.concatenate(([np.int32(i)], cand - offsets[1:]))
        matrix[i] = np.minimum.accumulate(shifted) + offsets
    return matrix


def edit_distance(ref, hyp) -> tuple[int, EditAlignment]:
    """Minimal edit count plus one alignment achieving it.

    Traceback ties break deterministically, preferring Match, then
    Substitute, then Delete, then Insert, walking back from the sequence
    ends; confusion statistics downstream rely on this being stable.
    """
    matrix = _distance_matrix(ref, hyp)
    i, j = len(ref), len(hyp)
    ops: list[EditOp] = []
    while i > 0 or j > 0:
        here = matrix[i, j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and matrix[i - 1, j - 1] == here:
            ops.append(EditOp(MATCH, ref[i - 1], hyp[j - 1]))
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and matrix[i - 1, j - 1] + 1 == here:
            ops.append(EditOp(SUBSTITUTE, ref[i - 1], hyp[j - 1]))
            i -= 1
            j -= 1
        elif i > 0 and matrix[i - 1, j] + 1 == here:
            ops.append(EditOp(DELETE, ref[i - 1], None))
            i -= 1
        else:
            ops.append(EditOp(INSERT, None, hyp[j - 1]))
            j -= 1
    ops.reverse()
    return int(matrix[len(ref), len(hyp)]), EditAlignment(ops=ops)


def levenshtein_distance(ref, hyp) -> int:
    """Distance only, two rows over the shorter sequence."""
    longer, shorter = (ref, hyp) if len(ref) >= len(hyp) else (hyp, ref)
    previous = list(range(len(shorter) + 1))
    for i, unit_long in enumerate(longer, start=1):
        current = [i] + [0] * len(shorter)
        for j, unit_short in enumerate(shorter, start=1):
            current[j] = min(
                previous[j - 1] + (unit_long != unit_short),
                previous[j] + 1,
                current[j - 1] + 1,
            )
        previous = current
    return previous[-1]


_BATCH_CHUNK = 2048


def _batch_chunk(chunk: list[tuple]) -> list[int]:
    """Lockstep row DP over one chunk of encoded (ref, hyp) int-array pairs.

    All pairs advance through DP rows together; each pair's distance is
    captured at the row matching its own reference length. Distinct pad
    sentinels (-2 for ref, -1 for hyp) can never match anything.
    """
    count = len(chunk)
    ref_lens = np.fromiter((len(r) for r, _ in chunk), dtype=np.int64, count=count)
    hyp_lens = np.fromiter((len(h) for _, h in chunk), dtype=np.int64, count=count)
    max_ref = int(ref_lens.max())
    max_hyp = int(hyp_lens.max())
    distances = np.zeros(count, dtype=np.int64)
    distances[ref_lens == 0] = hyp_lens[ref_lens == 0]
    if max_ref == 0:
        return distances.tolist()

    refs = np.full((count, max_ref), -2, dtype=np.int32)
    hyps = np.full((count, max_hyp), -1, dtype=np.int32)
    for k, (ref, hyp) in enumerate(chunk):
        refs[k, : len(ref)] = ref
        hyps[k, : len(hyp)] = hyp

    offsets = np.arange(max_hyp + 1, dtype=np.int32)
    row = np.broadcast_to(offsets, (count, max_hyp + 1)).copy()
    for i in range(1, max_ref + 1):
        ref_col = refs[:, i - 1 : i]
        cand = np.minimum(row[:, :-1] + (ref_col != hyps), row[:, 1:] + 1)
        head = np.full((count, 1), i, dtype=np.int32)
        shifted = np.concatenate([head, cand - offsets[1:]], axis=1)
        row = np.minimum.accumulate(shifted, axis=1) + offsets
        finished = ref_lens == i
        if finished.any():
            distances[finished] = row[finished, hyp_lens[finished]]
    return distances.tolist()


def _batch_distances(pairs: list[tuple]) -> list[int]:
    """Levenshtein distances for many (ref, hyp) sequence pairs at once.

    Pairs are sorted by length and processed in chunks so padding tracks each
    chunk's own maxima instead of the corpus-wide worst case; results come
    back in input order.
    """
    if not pairs:
        return []
    vocab: dict = {}

    def encode(seq):
        row = np.empty(len(seq), dtype=np.int32)
        for k, unit in enumerate(seq):
            value = vocab.get(unit)
            if value is None:
                value = len(vocab)
                vocab[unit] = value
            row[k] = value
        return row

    encoded = [(encode(ref), encode(hyp)) for ref, hyp in pairs]
    order = sorted(
        range(len(pairs)), key=lambda k: (len(encoded[k][0]), len(encoded[k][1]))
    )
    distances = [0] * len(pairs)
    for start in range(0, len(order), _BATCH_CHUNK):
        indices = order[start : start + _BATCH_CHUNK]
        for index, value in zip(indices, _batch_chunk([encoded[k] for k in indices])):
            distances[index] = value
    return distances


@dataclass
class UtteranceScore:
    """Per-utterance evaluation record over normalized text."""

    id: str | None
    ref: str
    hyp: str
    word_edits: int
    ref_word_count: int
    char_edits: int
    ref_char_count: int
    word_alignment: EditAlignment | None = None
    char_alignment: EditAlignment | None = None
    excluded_empty_ref: bool = False

    @property
    def wer_percent(self) -> float | None:
        if self.ref_word_count == 0:
            return None
        return 100.0 * self.word_edits / self.ref_word_count

    @property
    def cer_percent(self) -> float | None:
        if self.ref_char_count == 0:
            return None
        return 100.0 * self.char_edits / self.ref_char_count


@dataclass
class EvalReport:
    policy: NormalizationPolicy
    per_utterance: list[UtteranceScore]
    corpus_wer_percent: float
    corpus_cer_percent: float
    excluded_count: int

    def summary_record(self) -> dict:
        return {
            "record": "summary",
            "policy": self.policy.to_dict(),
            "corpus_wer_percent": self.corpus_wer_percent,
            "corpus_cer_percent": self.corpus_cer_percent,
            "utterance_count": len(self.per_utterance),
            "excluded_empty_ref_count": self.excluded_count,
        }

    def save(self, path: str) -> None:
        """Write the line-delimited report plus a metric,value CSV sibling."""
        path = Path(path)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(
                json.dumps(self.summary_record(), ensure_ascii=False, separators=(",", ":"))
            )
            handle.write("\n")
            for score in self.per_utterance:
                record = {
                    "record": "utterance",
                    "id": score.id,
                    "ref": score.ref,
                    "hyp": score.hyp,
                    "word_edits": score.word_edits,
                    "ref_word_count": score.ref_word_count,
                    "char_edits": score.char_edits,
                    "ref_char_count": score.ref_char_count,
                    "excluded_empty_ref": score.excluded_empty_ref,
                }
                if score.word_alignment is not None:
                    record["word_alignment"] = score.word_alignment.to_lists()
                if score.char_alignment is not None:
                    record["char_alignment"] = score.char_alignment.to_lists()
                handle.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
                handle.write("\n")
        summary = self.summary_record()
        csv_lines = ["metric,value"]
        for key in (
            "corpus_wer_percent",
            "corpus_cer_percent",
            "utterance_count",
            "excluded_empty_ref_count",
        ):
            csv_lines.append(f"{key},{summary[key]}")
        path.with_suffix(".csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str) -> "EvalReport":
        with open(path, encoding="utf-8") as handle:
            lines = [line for line in (l.strip() for l in handle) if line]
        if not lines:
            raise ValueError(f"empty evaluation report: {path}")
        summary = json.loads(lines[0])
        if summary.get("record") != "summary":
            raise ValueError(f"first line of {path} is not a summary record")
        scores = []
        for line in lines[1:]:
            record = json.loads(line)
            scores.append(
                UtteranceScore(
                    id=record["id"],
                    ref=record["ref"],
                    hyp=record["hyp"],
                    word_edits=record["word_edits"],
                    ref_word_count=record["ref_word_count"],
                    char_edits=record["char_edits"],
                    ref_char_count=record["ref_char_count"],
                    word_alignment=EditAlignment.from_lists(record["word_alignment"])
                    if "word_alignment" in record
                    else None,
                    char_alignment=EditAlignment.from_lists(record["char_alignment"])
                    if "char_alignment" in record
                    else None,
                    excluded_empty_ref=record["excluded_empty_ref"],
                )
            )
        return cls(
            policy=NormalizationPolicy.from_dict(summary["policy"]),
            per_utterance=scores,
            corpus_wer_percent=summary["corpus_wer_percent"],
            corpus_cer_percent=summary["corpus_cer_percent"],
            excluded_count=summary["excluded_empty_ref_count"],
        )


def score_pair(
    ref: str,
    hyp: str,
    policy: NormalizationPolicy | None = None,
    utterance_id: str | None = None,
    include_alignments: bool = True,
) -> UtteranceScore:
    """Normalize both strings, then score words and characters."""
    if policy is None:
        policy = DEFAULT_POLICY
    norm_ref = normalize(ref, policy)
    norm_hyp = normalize(hyp, policy)
    ref_words = tokenize_words(norm_ref)
    hyp_words = tokenize_words(norm_hyp)
    if include_alignments:
        word_edits, word_alignment = edit_distance(ref_words, hyp_words)
        char_edits, char_alignment = edit_distance(norm_ref, norm_hyp)
    else:
        word_edits = levenshtein_distance(ref_words, hyp_words)
        char_edits = levenshtein_distance(norm_ref, norm_hyp)
        word_alignment = char_alignment = None
    return UtteranceScore(
        id=utterance_id,
        ref=norm_ref,
        hyp=norm_hyp,
        word_edits=word_edits,
        ref_word_count=len(ref_words),
        char_edits=char_edits,
        ref_char_count=len(norm_ref),
        word_alignment=word_alignment,
        char_alignment=char_alignment,
        excluded_empty_ref=norm_ref == "",
    )


def score_corpus(
    pairs: list[tuple[str, str, str]],
    policy: NormalizationPolicy | None = None,
    include_alignments: bool = False,
) -> EvalReport:
    """Micro-averaged corpus WER/CER over (id, ref, hyp) triples.

    Utterances whose reference normalizes to the empty string are flagged and
    excluded from both the numerator and denominator of the corpus averages.
    A corpus where every reference is empty (or no pairs at all) is refused.
    """
    if policy is None:
        policy = DEFAULT_POLICY
    if not pairs:
        raise ValueError("empty corpus: no (id, ref, hyp) pairs to score")
    seen = set()
    for utterance_id, _, _ in pairs:
        if utterance_id in seen:
            raise ValueError(f"duplicate utterance id {utterance_id!r}")
        seen.add(utterance_id)

    normalized = [(normalize(ref, policy), normalize(hyp, policy)) for _, ref, hyp in pairs]
    if all(ref == "" for ref, _ in normalized):
        raise ValueError("all references are empty after normalization; nothing to score")

    word_pairs = [(tokenize_words(r), tokenize_words(h)) for r, h in normalized]
    scores: list[UtteranceScore] = []
    if include_alignments:
        word_results = [edit_distance(r, h) for r, h in word_pairs]
        char_results = [edit_distance(r, h) for r, h in normalized]
        word_dists = [d for d, _ in word_results]
        char_dists = [d for d, _ in char_results]
    else:
        word_dists = _batch_distances(word_pairs)
        char_dists = _batch_distances(normalized)

    for index, (utterance_id, _, _) in enumerate(pairs):
        norm_ref, norm_hyp = normalized[index]
        scores.append(
            UtteranceScore(
                id=utterance_id,
                ref=norm_ref,
                hyp=norm_hyp,
                word_edits=word_dists[index],
                ref_word_count=len(word_pairs[index][0]),
                char_edits=char_dists[index],
                ref_char_count=len(norm_ref),
                word_alignment=word_results[index][1] if include_alignments else None,
                char_alignment=char_results[index][1] if include_alignments else None,
                excluded_empty_ref=norm_ref == "",
            )
        )

    included = [s for s in scores if not s.excluded_empty_ref]
    total_word_edits = sum(s.word_edits for s in included)
    total_words = sum(s.ref_word_count for s in included)
    total_char_edits = sum(s.char_edits for s in included)
    total_chars = sum(s.ref_char_count for s in included)
    return EvalReport(
        policy=policy,
        per_utterance=scores,
        corpus_wer_percent=100.0 * total_word_edits / total_words,
        corpus_cer_percent=100.0 * total_char_edits / total_chars,
        excluded_count=len(scores) - len(included),
    )
