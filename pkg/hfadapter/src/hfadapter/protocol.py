"""Line-delimited JSON wire protocol, server side plus a client-side parser.

Each line is one UTF-8 JSON record terminated by \\n. Requests:
{"type":"asr","id":...,"audio":...} and
{"type":"tts","id":...,"text":...,"voice":...,"out_audio":...}.
Responses keep canonical key order:
{"id":...,"text":...,"confidence":...,"language":...} for ASR success,
{"id":...,"out_audio":...,"duration_sec":...} for TTS success,
{"id":...,"error":...} for failure. {"type":"end"} closes the stream in
both directions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

END = object()
END_LINE = '{"type":"end"}'


class ProtocolError(Exception):
    """A line violated the wire format."""


@dataclass
class AsrJob:
    id: str
    audio: str


@dataclass
class TtsJob:
    id: str
    text: str
    voice: str
    out_audio: str


def _dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def asr_response_line(job_id: str, text: str, confidence: float, language: str) -> str:
    if not 0.0 <= confidence <= 1.0:
        raise ProtocolError(f"confidence {confidence!r} outside [0, 1]")
    return _dumps(
        {"id": job_id, "text": text, "confidence": confidence, "language": language}
    )


def tts_response_line(job_id: str, out_audio: str, duration_sec: float) -> str:
    if not duration_sec > 0:
        raise ProtocolError(f"duration_sec {duration_sec!r}, expected > 0")
    return _dumps({"id": job_id, "out_audio": out_audio, "duration_sec": duration_sec})


def error_response_line(job_id: str, message: str) -> str:
    return _dumps({"id": job_id, "error": message})


def _load_object(line: str) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed line: {line!r}") from exc
    if not isinstance(record, dict):
        raise ProtocolError(f"line is not an object: {line!r}")
    return record


def parse_request_line(line: str):
    """One request line -> AsrJob, TtsJob, or the END sentinel."""
    record = _load_object(line)
    kind = record.get("type")
    if kind == "end":
        return END
    if kind == "asr":
        for key in ("id", "audio"):
            if not isinstance(record.get(key), str):
                raise ProtocolError(f"asr request needs string {key!r}: {line!r}")
        return AsrJob(id=record["id"], audio=record["audio"])
    if kind == "tts":
        for key in ("id", "text", "voice", "out_audio"):
            if not isinstance(record.get(key), str):
                raise ProtocolError(f"tts request needs string {key!r}: {line!r}")
        return TtsJob(
            id=record["id"],
            text=record["text"],
            voice=record["voice"],
            out_audio=record["out_audio"],
        )
    raise ProtocolError(f"unknown request type {kind!r}: {line!r}")


def parse_response_line(line: str, kind: str):
    """One response line -> validated dict, or the END sentinel.

    kind is "asr" or "tts" and selects which success shape is legal. Used by
    this package's own tests as the peer; the serving side never parses
    responses.
    """
    record = _load_object(line)
    if record.get("type") == "end":
        return END
    job_id = record.get("id")
    if not isinstance(job_id, str):
        raise ProtocolError(f"response without string id: {line!r}")
    if "error" in record:
        if {"text", "confidence", "language", "out_audio", "duration_sec"} & set(record):
            raise ProtocolError(f"response {job_id!r} mixes error and success keys")
        if not isinstance(record["error"], str):
            raise ProtocolError(f"error for {job_id!r} is not a string")
        return record
    if kind == "asr":
        if not isinstance(record.get("text"), str):
            raise ProtocolError(f"asr response {job_id!r} lacks text")
        confidence = record.get("confidence")
        if not _is_number(confidence) or not 0.0 <= confidence <= 1.0:
            raise ProtocolError(
                f"asr response {job_id!r} confidence {confidence!r} outside [0, 1]"
            )
        if not isinstance(record.get("language"), str):
            raise ProtocolError(f"asr response {job_id!r} lacks language")
        return record
    if kind == "tts":
        if not isinstance(record.get("out_audio"), str):
            raise ProtocolError(f"tts response {job_id!r} lacks out_audio")
        duration = record.get("duration_sec")
        if not _is_number(duration) or duration <= 0:
            raise ProtocolError(
                f"tts response {job_id!r} duration_sec {duration!r}, expected > 0"
            )
        return record
    raise ProtocolError(f"unknown response kind {kind!r}")
