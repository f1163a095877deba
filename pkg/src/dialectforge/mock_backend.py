"""Deterministic mock ASR/TTS backend speaking the wire protocol.

The mock makes the pipeline testable at desk scale: ASR answers come from an
oracle mapping ids to reference texts, corrupted word-by-word at a chosen
noise rate; TTS writes real (silent) mono 16 kHz WAV files.

Determinism contract: each word's corruption decision depends only on
(seed, utterance id, word index), never on request order or noise rate
draws, so identical invocations produce byte-identical streams and a word
corrupted at noise rate r stays corrupted at every rate above r. That
coupling makes WER strictly monotone in the noise rate rather than only
monotone in expectation.

Fault-injection flags (--crash-after, --stall-ids, --duplicate-ids,
--unknown-id-for, --fail-ids, --jitter) exist for the client's failure-path
tests.

Run as `dialect-forge-mock` or `python -m dialectforge.mock_backend`.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import random
import selectors
import sys
import time
import wave

from .backend import (
    END_RECORD,
    AsrRequest,
    AsrResponse,
    TtsRequest,
    TtsResponse,
    parse_request,
    serialize_response,
)

CONFIDENCE_CLEAN = 0.95
CONFIDENCE_CORRUPT = 0.5

# Fixed confusion pools: the first mappable character of a word is
# substituted. Keeping exactly one substitution per corrupted word makes the
# injected confusion counts recoverable by alignment downstream.
ARABIC_CONFUSIONS = {
    "د": "ض",  # dal -> dad
    "ت": "ط",  # teh -> tah
    "س": "ص",  # seen -> sad
    "ذ": "ز",  # thal -> zain
    "ق": "ك",  # qaf -> kaf
    "ه": "ة",  # heh -> teh marbuta
}
ASCII_CONFUSIONS = {"a": "e", "s": "z", "t": "d"}
ARABIC_FALLBACK_PREFIX = "ء"  # hamza
ASCII_FALLBACK_PREFIX = "x"


def word_corruption_draw(seed: int, utterance_id: str, word_index: int) -> float:
    """Uniform [0,1) draw tied to (seed, id, word index) only."""
    digest = hashlib.sha256(
        f"{seed}|{utterance_id}|{word_index}".encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def corrupt_word(word: str) -> str:
    """Deterministic word corruption that survives text normalization."""
    for index, ch in enumerate(word):
        if ch in ARABIC_CONFUSIONS:
            return word[:index] + ARABIC_CONFUSIONS[ch] + word[index + 1 :]
    for index, ch in enumerate(word):
        if ch in ASCII_CONFUSIONS:
            return word[:index] + ASCII_CONFUSIONS[ch] + word[index + 1 :]
    if any("؀" <= ch <= "ۿ" for ch in word):
        return ARABIC_FALLBACK_PREFIX + word
    return ASCII_FALLBACK_PREFIX + word


def mock_transcription(
    seed: int, noise_rate: float, utterance_id: str, oracle_text: str
) -> tuple[str, float]:
    """Corrupted text and its confidence for one utterance.

    Confidence is exp(mean per-word log score) with score 0.5 for corrupted
    words and 0.95 for clean ones; an utterance with no words scores 0.95.
    """
    words = oracle_text.split()
    if not words:
        return "", CONFIDENCE_CLEAN
    out = []
    log_scores = []
    for index, word in enumerate(words):
        corrupted = word_corruption_draw(seed, utterance_id, index) < noise_rate
        out.append(corrupt_word(word) if corrupted else word)
        log_scores.append(
            math.log(CONFIDENCE_CORRUPT if corrupted else CONFIDENCE_CLEAN)
        )
    confidence = math.exp(sum(log_scores) / len(log_scores))
    confidence = min(1.0, max(0.0, confidence))
    return " ".join(out), confidence


def write_silent_wav(path: str, seconds: float, sample_rate: int = 16000) -> None:
    frames = int(round(seconds * sample_rate))
    with wave.open(path, "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(sample_rate)
        handle.writeframes(b"\x00\x00" * frames)


def load_oracle(path: str) -> dict[str, str]:
    """id -> text map from a JSONL file; manifest lines work as-is."""
    oracle = {}
    with open(path, encoding="utf-8") as handle:
        for raw in handle:
            raw = raw.strip()
            if not raw:
                continue
            record = json.loads(raw)
            if not isinstance(record, dict) or "id" not in record:
                continue  # manifest metadata header or foreign line
            if record.get("text") is not None:
                oracle[record["id"]] = record["text"]
    return oracle


class _Responder:
    """Writes responses, optionally buffering and shuffling them (jitter)."""

    def __init__(self, out, jitter_depth: int, rng: random.Random):
        self.out = out
        self.jitter_depth = jitter_depth
        self.rng = rng
        self.buffer: list[str] = []

    def emit(self, line: str) -> None:
        if self.jitter_depth <= 0:
            self.out.write((line + "\n").encode("utf-8"))
            self.out.flush()
            return
        self.buffer.append(line)
        if len(self.buffer) >= self.jitter_depth or self.rng.random() < 0.4:
            self.flush()

    def flush(self) -> None:
        self.rng.shuffle(self.buffer)
        for line in self.buffer:
            self.out.write((line + "\n").encode("utf-8"))
        self.buffer.clear()
        self.out.flush()


def _stdin_ready(selector, timeout: float) -> bool:
    return bool(selector.select(timeout))


def serve(args, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    rng = random.Random(args.seed)
    responder = _Responder(stdout, args.jitter, rng)
    oracle = load_oracle(args.oracle) if args.oracle else {}
    stall_ids = set(args.stall_ids.split(",")) if args.stall_ids else set()
    fail_ids = set(args.fail_ids.split(",")) if args.fail_ids else set()
    answered = 0

    selector = None
    if args.jitter > 0 and hasattr(stdin, "fileno"):
        try:
            selector = selectors.DefaultSelector()
            selector.register(stdin, selectors.EVENT_READ)
        except (ValueError, OSError):
            selector = None

    while True:
        # Never sit on buffered jitter responses while the peer is idle;
        # flushing on quiet input keeps any client parallelism deadlock-free.
        if selector is not None and responder.buffer and not _stdin_ready(selector, 0.05):
            responder.flush()
        raw = stdin.readline()
        if not raw:
            responder.flush()
            return 0  # EOF without an end record: close quietly
        line = raw.decode("utf-8").rstrip("\n")
        if not line.strip():
            continue
        request = parse_request(line)
        if request is END_RECORD:
            responder.flush()
            stdout.write(b'{"type":"end"}\n')
            stdout.flush()
            return 0

        if isinstance(request, AsrRequest):
            if args.task != "asr":
                response = AsrResponse(id=request.id, error="asr not served by this task")
            elif request.id in fail_ids:
                response = AsrResponse(
                    id=request.id, error="recognition failed (injected)"
                )
            elif request.id in oracle:
                text, confidence = mock_transcription(
                    args.seed, args.noise_rate, request.id, oracle[request.id]
                )
                response = AsrResponse(
                    id=request.id, text=text, confidence=confidence, language="ar"
                )
            else:
                response = AsrResponse(
                    id=request.id, error=f"id {request.id!r} not in oracle"
                )
        elif isinstance(request, TtsRequest):
            if args.task != "tts":
                response = TtsResponse(id=request.id, error="tts not served by this task")
            elif request.id in fail_ids:
                response = TtsResponse(
                    id=request.id, error="synthesis failed (injected)"
                )
            else:
                try:
                    write_silent_wav(request.out_audio, args.clip_seconds)
                    response = TtsResponse(
                        id=request.id,
                        out_audio=request.out_audio,
                        duration_sec=args.clip_seconds,
                    )
                except OSError as exc:
                    response = TtsResponse(id=request.id, error=f"cannot write: {exc}")
        else:
            continue

        if request.id in stall_ids:
            time.sleep(args.stall_seconds)

        line_out = serialize_response(response)
        if args.unknown_id_for and request.id == args.unknown_id_for:
            line_out = line_out.replace(
                json.dumps(request.id, ensure_ascii=False),
                json.dumps(request.id + "-unknown", ensure_ascii=False),
                1,
            )
        responder.emit(line_out)
        if args.duplicate_ids and request.id in args.duplicate_ids.split(","):
            responder.emit(serialize_response(response))
        answered += 1
        if args.crash_after is not None and answered >= args.crash_after:
            responder.flush()
            return 3  # simulated crash: exit without reading the rest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialect-forge-mock",
        description="Deterministic mock ASR/TTS backend for pipeline tests.",
    )
    parser.add_argument("--task", choices=("asr", "tts"), default="asr")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--noise-rate", type=float, default=0.0)
    parser.add_argument("--oracle", help="JSONL file mapping ids to reference text")
    parser.add_argument("--clip-seconds", type=float, default=1.0)
    parser.add_argument("--fail-ids", help="comma-separated ids to fail (tts)")
    parser.add_argument("--stall-ids", help="comma-separated ids to stall on")
    parser.add_argument("--stall-seconds", type=float, default=1.0)
    parser.add_argument("--crash-after", type=int, help="exit abruptly after N answers")
    parser.add_argument("--duplicate-ids", help="ids to answer twice (fault test)")
    parser.add_argument("--unknown-id-for", help="id to answer with a wrong id")
    parser.add_argument("--jitter", type=int, default=0, help="shuffle-buffer depth")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not 0.0 <= args.noise_rate <= 1.0:
        print("--noise-rate must be in [0, 1]", file=sys.stderr)
        return 2
    return serve(args)


if __name__ == "__main__":
    sys.exit(main())
