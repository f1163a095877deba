"""Corpus manifests: data model, on-disk format, validation, stats, combine.

A manifest file is UTF-8, one JSON record per line. Required utterance keys:
id, audio, duration_sec, source. Optional keys: text, speaker, confidence,
language. Unknown keys round-trip verbatim. An optional first line of the
form {"@manifest": {"name": ..., "provenance": [...]}} carries manifest
metadata; it is not a data line, and files without it load with the file stem
as name and empty provenance.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

SOURCE_TAGS = frozenset(
    {"sdn-clean", "msa", "pseudo", "tts", "oook-unlabeled", "other"}
)

_REQUIRED_KEYS = ("id", "audio", "duration_sec", "source")
_OPTIONAL_KEYS = ("text", "speaker", "confidence", "language")
_METADATA_KEY = "@manifest"


class ManifestError(ValueError):
    """Raised for malformed manifest files or invalid manifest operations.

    line is 1-based when the error is tied to a file line; field names the
    offending record key when one is identifiable.
    """

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"field {field!r}: "
        super().__init__(prefix + message)


@dataclass
class Utterance:
    """One audio clip with metadata and an optional transcript.

    extra holds unknown record keys verbatim so foreign manifests survive a
    load/save round-trip untouched.
    """

    id: str
    audio: str
    duration_sec: float
    source: str
    text: str | None = None
    speaker: str | None = None
    confidence: float | None = None
    language: str | None = None
    extra: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        record = {
            "id": self.id,
            "audio": self.audio,
            "duration_sec": self.duration_sec,
            "source": self.source,
        }
        for key in _OPTIONAL_KEYS:
            value = getattr(self, key)
            if value is not None:
                record[key] = value
        record.update(self.extra)
        return record


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_utterance(utt: Utterance) -> list[tuple[str, str]]:
    """Return (field, message) pairs for every violated utterance invariant."""
    problems = []
    if not isinstance(utt.id, str) or not utt.id:
        problems.append(("id", "id must be a non-empty string"))
    if not isinstance(utt.audio, str) or not utt.audio:
        problems.append(("audio", "audio must be a non-empty path string"))
    if not _is_number(utt.duration_sec) or not math.isfinite(utt.duration_sec):
        problems.append(("duration_sec", "duration_sec must be a finite number"))
    elif utt.duration_sec < 0:
        problems.append(("duration_sec", f"duration_sec must be >= 0, got {utt.duration_sec}"))
    if utt.source not in SOURCE_TAGS:
        problems.append(
            ("source", f"source must be one of {sorted(SOURCE_TAGS)}, got {utt.source!r}")
        )
    if utt.confidence is not None:
        if not _is_number(utt.confidence):
            problems.append(("confidence", "confidence must be a number"))
        elif not 0.0 <= utt.confidence <= 1.0:
            problems.append(
                ("confidence", f"confidence must be in [0, 1], got {utt.confidence}")
            )
    if utt.source == "pseudo" and utt.confidence is None:
        problems.append(("confidence", "source 'pseudo' requires a confidence"))
    for key, kind in (("text", str), ("speaker", str), ("language", str)):
        value = getattr(utt, key)
        if value is not None and not isinstance(value, kind):
            problems.append((key, f"{key} must be a string"))
    return problems


@dataclass
class Manifest:
    """Ordered utterances plus a name and an append-only provenance trail."""

    name: str
    utterances: list[Utterance] = field(default_factory=list)
    provenance: list[dict] = field(default_factory=list)

    def ids(self) -> list[str]:
        return [u.id for u in self.utterances]

    def with_stage(self, stage: str, **params) -> list[dict]:
        """New provenance list extended with one stage entry (append-only)."""
        return [*self.provenance, {"stage": stage, "params": params}]


@dataclass
class DatasetStats:
    utterance_count: int
    total_hours: float
    distinct_speakers: int
    labeled_count: int
    confidence_histogram: list[int]

    @property
    def reported_hours(self) -> float:
        """Hours rounded half-up to 2 decimals for table-style reporting."""
        return float(
            Decimal(repr(self.total_hours)).quantize(
                Decimal("0.01"), rounding=ROUND_HALF_UP
            )
        )


def _utterance_from_record(record: dict, line: int) -> Utterance:
    if not isinstance(record, dict):
        raise ManifestError("record is not an object", line=line)
    for key in _REQUIRED_KEYS:
        if key not in record:
            raise ManifestError("required key missing", line=line, field=key)
    known = set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS)
    utt = Utterance(
        id=record["id"],
        audio=record["audio"],
        duration_sec=float(record["duration_sec"])
        if _is_number(record["duration_sec"])
        else record["duration_sec"],
        source=record["source"],
        text=record.get("text"),
        speaker=record.get("speaker"),
        confidence=float(record["confidence"])
        if _is_number(record.get("confidence"))
        else record.get("confidence"),
        language=record.get("language"),
        extra={k: v for k, v in record.items() if k not in known},
    )
    problems = _check_utterance(utt)
    if problems:
        field_name, message = problems[0]
        raise ManifestError(message, line=line, field=field_name)
    return utt


def load_manifest(path: str) -> Manifest:
    """Parse a manifest file, preserving line order.

    Raises ManifestError naming the 1-based line and field for the first
    malformed record; duplicate ids report both line numbers.
    """
    name = os.path.splitext(os.path.basename(path))[0]
    provenance: list[dict] = []
    utterances: list[Utterance] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            stripped = raw.strip()
            if not stripped:
                continue
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if (
                lineno == 1
                and isinstance(record, dict)
                and set(record) == {_METADATA_KEY}
            ):
                meta = record[_METADATA_KEY]
                if not isinstance(meta, dict):
                    raise ManifestError("manifest metadata is not an object", line=1)
                name = meta.get("name", name)
                provenance = meta.get("provenance", [])
                continue
            utt = _utterance_from_record(record, lineno)
            if utt.id in seen:
                raise ManifestError(
                    f"duplicate id {utt.id!r} (first seen on line {seen[utt.id]})",
                    line=lineno,
                    field="id",
                )
            seen[utt.id] = lineno
            utterances.append(utt)
    return Manifest(name=name, utterances=utterances, provenance=provenance)


def save_manifest(manifest: Manifest, path: str) -> None:
    """Write a manifest with byte-stable field ordering.

    Absent optional fields are omitted, never emitted as null. The metadata
    header is written first; load_manifest(save_manifest(m)) reproduces m
    field for field.
    """
    with open(path, "w", encoding="utf-8") as handle:
        header = {
            _METADATA_KEY: {
                "name": manifest.name,
                "provenance": manifest.provenance,
            }
        }
        handle.write(json.dumps(header, ensure_ascii=False, separators=(",", ":")))
        handle.write("\n")
        for utt in manifest.utterances:
            handle.write(
                json.dumps(utt.to_record(), ensure_ascii=False, separators=(",", ":"))
            )
            handle.write("\n")


def compute_stats(manifest: Manifest) -> DatasetStats:
    """Counts, compensated-sum hours, speakers, labels, confidence histogram.

    The histogram has 10 equal-width bins over [0, 1]; confidence 1.0 falls in
    the last bin; utterances without confidence are not binned.
    """
    histogram = [0] * 10
    speakers = set()
    labeled = 0
    for utt in manifest.utterances:
        if utt.speaker is not None:
            speakers.add(utt.speaker)
        if utt.text is not None:
            labeled += 1
        if utt.confidence is not None:
            histogram[min(int(utt.confidence * 10), 9)] += 1
    total_hours = math.fsum(u.duration_sec for u in manifest.utterances) / 3600.0
    return DatasetStats(
        utterance_count=len(manifest.utterances),
        total_hours=total_hours,
        distinct_speakers=len(speakers),
        labeled_count=labeled,
        confidence_histogram=histogram,
    )


def combine(parts: list[Manifest], name: str) -> Manifest:
    """Concatenate manifests in order, rewriting ids only where they collide.

    An id value occurring in more than one part (or more than once anywhere)
    is rewritten to "<part-name>/<id>" at every occurrence; unique ids pass
    through untouched. If rewriting still leaves duplicates (duplicate part
    names), the collision is unresolvable and raises ManifestError.
    """
    if not parts:
        raise ManifestError("combine requires at least one part")
    counts: dict[str, int] = {}
    for part in parts:
        for utt in part.utterances:
            counts[utt.id] = counts.get(utt.id, 0) + 1
    colliding = {i for i, c in counts.items() if c > 1}

    utterances: list[Utterance] = []
    seen: dict[str, str] = {}
    for part in parts:
        for utt in part.utterances:
            new_id = f"{part.name}/{utt.id}" if utt.id in colliding else utt.id
            if new_id in seen:
                raise ManifestError(
                    f"id {new_id!r} still collides after rewriting; "
                    f"parts {seen[new_id]!r} and {part.name!r} share a name"
                )
            seen[new_id] = part.name
            utterances.append(
                Utterance(
                    id=new_id,
                    audio=utt.audio,
                    duration_sec=utt.duration_sec,
                    source=utt.source,
                    text=utt.text,
                    speaker=utt.speaker,
                    confidence=utt.confidence,
                    language=utt.language,
                    extra=dict(utt.extra),
                )
            )

    provenance = [entry for part in parts for entry in part.provenance]
    provenance.append(
        {"stage": "combine", "params": {"name": name, "parts": [p.name for p in parts]}}
    )
    return Manifest(name=name, utterances=utterances, provenance=provenance)


def validate(manifest: Manifest, audio_root: str | None = None) -> list[dict]:
    """Collect every invariant violation as data; empty list means clean.

    Audio existence is checked only when audio_root is given; audio is never
    decoded here.
    """
    violations = []
    seen: dict[str, int] = {}
    for index, utt in enumerate(manifest.utterances):
        for field_name, message in _check_utterance(utt):
            violations.append({"id": utt.id, "field": field_name, "message": message})
        if utt.id in seen:
            violations.append(
                {
                    "id": utt.id,
                    "field": "id",
                    "message": f"duplicate id (positions {seen[utt.id]} and {index})",
                }
            )
        else:
            seen[utt.id] = index
        if audio_root is not None and isinstance(utt.audio, str) and utt.audio:
            audio_path = os.path.join(audio_root, utt.audio)
            if not os.path.isfile(audio_path):
                violations.append(
                    {
                        "id": utt.id,
                        "field": "audio",
                        "message": f"audio file not found: {audio_path}",
                    }
                )
    return violations
