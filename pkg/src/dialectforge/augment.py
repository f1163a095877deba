"""Self-training and TTS augmentation stages.

Pseudo-labeling turns a teacher backend's transcriptions of unlabeled audio
into a training manifest; confidence filtering keeps only labels the teacher
was sure about; TTS preparation/assembly turns density-filtered sentences
into synthesized training audio; recipe emission writes the flat key=value
file consumed by training backends.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .backend import TtsRequest, TtsResponse
from .corpus import Manifest, Utterance


@dataclass
class PseudoLabelEntry:
    utterance_id: str
    hypothesis_text: str
    confidence: float
    language: str | None = None


@dataclass
class PseudoLabelBatch:
    entries: list[PseudoLabelEntry]
    teacher_id: str


def build_pseudo_manifest(unlabeled: Manifest, batch: PseudoLabelBatch) -> Manifest:
    """Attach pseudo-labels to unlabeled utterances.

    Output order follows the unlabeled manifest; utterances without a batch
    entry are dropped (a backend that failed on a clip must not leave a
    textless training row) and the drop count lands in provenance. Entries
    naming unknown or already-labeled utterances are errors.
    """
    by_id = {u.id: u for u in unlabeled.utterances}
    labels: dict[str, PseudoLabelEntry] = {}
    for entry in batch.entries:
        target = by_id.get(entry.utterance_id)
        if target is None:
            raise ValueError(
                f"pseudo-label entry for unknown id {entry.utterance_id!r}"
            )
        if target.text is not None:
            raise ValueError(
                f"pseudo-label entry for already-labeled id {entry.utterance_id!r}"
            )
        if entry.utterance_id in labels:
            raise ValueError(
                f"duplicate pseudo-label entry for id {entry.utterance_id!r}"
            )
        if not isinstance(entry.confidence, (int, float)) or not (
            0.0 <= entry.confidence <= 1.0
        ):
            raise ValueError(
                f"confidence for id {entry.utterance_id!r} must be in [0, 1], "
                f"got {entry.confidence!r}"
            )
        labels[entry.utterance_id] = entry

    utterances = []
    for utt in unlabeled.utterances:
        entry = labels.get(utt.id)
        if entry is None:
            continue
        utterances.append(
            Utterance(
                id=utt.id,
                audio=utt.audio,
                duration_sec=utt.duration_sec,
                source="pseudo",
                text=entry.hypothesis_text,
                speaker=utt.speaker,
                confidence=float(entry.confidence),
                language=entry.language,
                extra=dict(utt.extra),
            )
        )
    dropped = len(unlabeled.utterances) - len(utterances)
    return Manifest(
        name=f"{unlabeled.name}-pseudo",
        utterances=utterances,
        provenance=unlabeled.with_stage(
            "pseudo-label",
            teacher_id=batch.teacher_id,
            labeled=len(utterances),
            dropped=dropped,
        ),
    )


def filter_by_confidence(manifest: Manifest, threshold: float) -> Manifest:
    """Keep utterances with confidence >= threshold, preserving order."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    for utt in manifest.utterances:
        if utt.confidence is None:
            raise ValueError(f"utterance {utt.id!r} has no confidence to filter on")
    kept = [u for u in manifest.utterances if u.confidence >= threshold]
    return Manifest(
        name=manifest.name,
        utterances=kept,
        provenance=manifest.with_stage(
            "confidence-filter",
            threshold=threshold,
            kept=len(kept),
            dropped=len(manifest.utterances) - len(kept),
        ),
    )


def prepare_tts_jobs(
    sentences: list[tuple[str, str]], voice: str
) -> list[TtsRequest]:
    """One synthesis request per sentence; out_audio is "<sentence_id>.wav".

    Callers are responsible for density-filtering beforehand; this stage does
    not re-check.
    """
    seen = set()
    jobs = []
    for sentence_id, text in sentences:
        if sentence_id in seen:
            raise ValueError(f"duplicate sentence id {sentence_id!r}")
        seen.add(sentence_id)
        jobs.append(
            TtsRequest(
                id=sentence_id,
                text=text,
                voice=voice,
                out_audio=f"{sentence_id}.wav",
            )
        )
    return jobs


def assemble_tts_manifest(
    jobs: list[TtsRequest],
    responses: list[TtsResponse],
    name: str = "tts",
) -> Manifest:
    """Build the synthetic-speech manifest from completed TTS jobs.

    Failed and unanswered jobs are dropped; their counts land in provenance.
    A response whose id matches no job is an error.
    """
    by_id = {job.id: job for job in jobs}
    answered: dict[str, TtsResponse] = {}
    for response in responses:
        if response.id not in by_id:
            raise ValueError(f"response for unknown job id {response.id!r}")
        if response.id in answered:
            raise ValueError(f"duplicate response for job id {response.id!r}")
        answered[response.id] = response

    utterances = []
    failures = 0
    missing = 0
    for job in jobs:
        response = answered.get(job.id)
        if response is None:
            missing += 1
            continue
        if response.is_error:
            failures += 1
            continue
        utterances.append(
            Utterance(
                id=job.id,
                audio=response.out_audio,
                duration_sec=response.duration_sec,
                source="tts",
                text=job.text,
                speaker=job.voice,
            )
        )
    return Manifest(
        name=name,
        utterances=utterances,
        provenance=[
            {
                "stage": "tts-assemble",
                "params": {
                    "jobs": len(jobs),
                    "succeeded": len(utterances),
                    "failures": failures,
                    "missing": missing,
                },
            }
        ],
    )


@dataclass
class TrainingRecipe:
    """Hyperparameters and data paths handed to a training backend.

    The file is the sole contract consumed by trainers: flat key=value lines,
    UTF-8, keys exactly these field names.
    """

    steps: int = 5000
    learning_rate: float = 1e-5
    warmup_steps: int = 500
    train_batch_size: int = 8
    eval_batch_size: int = 4
    train_manifest: str = ""
    eval_manifest: str = ""
    base_model: str = ""

    def check(self) -> None:
        if self.warmup_steps < 0:
            raise ValueError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if self.steps <= self.warmup_steps:
            raise ValueError(
                f"steps ({self.steps}) must exceed warmup_steps ({self.warmup_steps})"
            )
        if self.train_batch_size < 1 or self.eval_batch_size < 1:
            raise ValueError("batch sizes must be >= 1")

    def to_text(self) -> str:
        lines = [f"{f.name}={getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "TrainingRecipe":
        values: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key] = value
        known = {f.name: f for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ValueError(f"unknown recipe keys: {sorted(unknown)}")
        converted: dict = {}
        for key, value in values.items():
            if key in ("steps", "warmup_steps", "train_batch_size", "eval_batch_size"):
                converted[key] = int(value)
            elif key == "learning_rate":
                converted[key] = float(value)
            else:
                converted[key] = value
        return cls(**converted)


def emit_recipe(
    train_manifest: str,
    eval_manifest: str,
    base_model: str,
    out_path: str | None = None,
    **overrides,
) -> TrainingRecipe:
    """Build and optionally write a training recipe.

    Defaults: steps 5000, learning_rate 1e-5, warmup_steps 500, train batch 8,
    eval batch 4. Overrides are applied last and the invariants re-checked, so
    an override that leaves steps <= warmup_steps is refused.
    """
    recipe = TrainingRecipe(
        train_manifest=train_manifest,
        eval_manifest=eval_manifest,
        base_model=base_model,
    )
    valid = {f.name for f in fields(TrainingRecipe)}
    for key, value in overrides.items():
        if key not in valid:
            raise ValueError(f"unknown recipe override {key!r}")
        setattr(recipe, key, value)
    recipe.check()
    if out_path is not None:
        recipe.save(out_path)
    return recipe
