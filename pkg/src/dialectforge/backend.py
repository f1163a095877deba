"""Pluggable ASR/TTS backend boundary: wire protocol and process client.

Protocol, bit-exact: each line is one UTF-8 JSON record terminated by \\n.
ASR request {"type":"asr","id":...,"audio":...}; ASR response
{"id":...,"text":...,"confidence":...,"language":...} or {"id":...,"error":...};
TTS request {"type":"tts","id":...,"text":...,"voice":...,"out_audio":...};
TTS response {"id":...,"out_audio":...,"duration_sec":...} or
{"id":...,"error":...}. A line {"type":"end"} closes the stream in both
directions.

The client keeps one long-lived backend process per run (model load time
dominates real backends), pipelines up to `parallelism` requests, and
re-sequences responses into request order. Timeouts and backend crashes
synthesize per-request error responses instead of aborting the batch;
malformed lines, duplicate ids, and unknown ids are protocol errors and
raise.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass

END_RECORD = {"type": "end"}
END_LINE = '{"type":"end"}'


class BackendError(Exception):
    """Backend could not be run at all (spawn failure, bad arguments)."""


class ProtocolError(BackendError):
    """The backend spoke the protocol wrongly (malformed line, bad id)."""


@dataclass
class AsrRequest:
    id: str
    audio: str


@dataclass
class AsrResponse:
    id: str
    text: str | None = None
    confidence: float | None = None
    language: str | None = None
    error: str | None = None

    @property
    def is_error(self) -> bool:
        return self.error is not None


@dataclass
class TtsRequest:
    id: str
    text: str
    voice: str
    out_audio: str


@dataclass
class TtsResponse:
    id: str
    out_audio: str | None = None
    duration_sec: float | None = None
    error: str | None = None

    @property
    def is_error(self) -> bool:
        return self.error is not None


def _dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def serialize_request(request: AsrRequest | TtsRequest) -> str:
    """Canonical request line (no trailing newline)."""
    if isinstance(request, AsrRequest):
        return _dumps({"type": "asr", "id": request.id, "audio": request.audio})
    return _dumps(
        {
            "type": "tts",
            "id": request.id,
            "text": request.text,
            "voice": request.voice,
            "out_audio": request.out_audio,
        }
    )


def serialize_response(response: AsrResponse | TtsResponse) -> str:
    """Canonical response line (no trailing newline)."""
    if response.error is not None:
        return _dumps({"id": response.id, "error": response.error})
    if isinstance(response, AsrResponse):
        return _dumps(
            {
                "id": response.id,
                "text": response.text,
                "confidence": response.confidence,
                "language": response.language,
            }
        )
    return _dumps(
        {
            "id": response.id,
            "out_audio": response.out_audio,
            "duration_sec": response.duration_sec,
        }
    )


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def parse_request(line: str):
    """Parse one request line into AsrRequest, TtsRequest, or END_RECORD.

    Used by protocol servers (the mock backend here; real adapters elsewhere).
    """
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed request line: {line!r}") from exc
    if not isinstance(record, dict):
        raise ProtocolError(f"request line is not an object: {line!r}")
    kind = record.get("type")
    if kind == "end":
        return END_RECORD
    if kind == "asr":
        for key in ("id", "audio"):
            if not isinstance(record.get(key), str):
                raise ProtocolError(f"asr request missing string key {key!r}: {line!r}")
        return AsrRequest(id=record["id"], audio=record["audio"])
    if kind == "tts":
        for key in ("id", "text", "voice", "out_audio"):
            if not isinstance(record.get(key), str):
                raise ProtocolError(f"tts request missing string key {key!r}: {line!r}")
        return TtsRequest(
            id=record["id"],
            text=record["text"],
            voice=record["voice"],
            out_audio=record["out_audio"],
        )
    raise ProtocolError(f"unknown request type {kind!r}: {line!r}")


def parse_response(line: str, kind: str):
    """Parse one response line for the given request kind ("asr" or "tts").

    Returns END_RECORD for an end line. Enforces the response invariants:
    exactly one of the success shape or error; confidence in [0,1]; language
    present on ASR success; duration_sec > 0 on TTS success.
    """
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed response line: {line!r}") from exc
    if not isinstance(record, dict):
        raise ProtocolError(f"response line is not an object: {line!r}")
    if record.get("type") == "end":
        return END_RECORD
    response_id = record.get("id")
    if not isinstance(response_id, str):
        raise ProtocolError(f"response without string id: {line!r}")
    if "error" in record:
        success_keys = {"text", "confidence", "language", "out_audio", "duration_sec"}
        if success_keys & set(record):
            raise ProtocolError(
                f"response for id {response_id!r} mixes error and success fields"
            )
        if not isinstance(record["error"], str):
            raise ProtocolError(f"error for id {response_id!r} is not a string")
        if kind == "asr":
            return AsrResponse(id=response_id, error=record["error"])
        return TtsResponse(id=response_id, error=record["error"])
    if kind == "asr":
        if not isinstance(record.get("text"), str):
            raise ProtocolError(f"asr response for id {response_id!r} lacks text")
        confidence = record.get("confidence")
        if not _is_number(confidence) or not 0.0 <= confidence <= 1.0:
            raise ProtocolError(
                f"asr response for id {response_id!r} has confidence "
                f"{confidence!r} outside [0, 1]"
            )
        if not isinstance(record.get("language"), str):
            raise ProtocolError(f"asr response for id {response_id!r} lacks language")
        return AsrResponse(
            id=response_id,
            text=record["text"],
            confidence=float(confidence),
            language=record["language"],
        )
    if not isinstance(record.get("out_audio"), str):
        raise ProtocolError(f"tts response for id {response_id!r} lacks out_audio")
    duration = record.get("duration_sec")
    if not _is_number(duration) or duration <= 0:
        raise ProtocolError(
            f"tts response for id {response_id!r} has duration_sec {duration!r}, "
            "expected > 0"
        )
    return TtsResponse(
        id=response_id, out_audio=record["out_audio"], duration_sec=float(duration)
    )


def _reader(stream, lines: queue.Queue) -> None:
    try:
        for line in stream:
            lines.put(("line", line.rstrip("\n")))
    except ValueError:
        pass  # stream closed under the reader
    finally:
        lines.put(("eof", None))


class _ProtocolRun:
    """One batched request/response exchange with a backend process."""

    def __init__(self, command, kind: str, parallelism: int, timeout: float):
        if parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {parallelism}")
        if timeout <= 0:
            raise ValueError(f"timeout must be positive, got {timeout}")
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.kind = kind
        self.parallelism = parallelism
        self.timeout = timeout

    def _synthesized_error(self, request_id: str, message: str):
        if self.kind == "asr":
            return AsrResponse(id=request_id, error=message)
        return TtsResponse(id=request_id, error=message)

    def run(self, requests: list) -> list:
        if not requests:
            return []
        ids = [r.id for r in requests]
        if len(set(ids)) != len(ids):
            duplicate = next(i for k, i in enumerate(ids) if i in ids[:k])
            raise ValueError(f"duplicate request id {duplicate!r}")

        try:
            child = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                encoding="utf-8",
            )
        except OSError as exc:
            raise BackendError(
                f"backend process failed to start: {self.command!r}: {exc}"
            ) from exc

        lines: queue.Queue = queue.Queue()
        reader = threading.Thread(target=_reader, args=(child.stdout, lines), daemon=True)
        reader.start()

        results: dict[str, object] = {}
        deadlines: dict[str, float] = {}
        timed_out: set[str] = set()
        next_index = 0
        eof = False

        def synthesize_remaining(message: str) -> None:
            nonlocal next_index
            for request_id in deadlines:
                results[request_id] = self._synthesized_error(request_id, message)
            deadlines.clear()
            while next_index < len(requests):
                request = requests[next_index]
                results[request.id] = self._synthesized_error(request.id, message)
                next_index += 1

        def send_while_capacity() -> bool:
            """Returns False when the child's stdin is gone (treated as EOF)."""
            nonlocal next_index
            while next_index < len(requests) and len(deadlines) < self.parallelism:
                request = requests[next_index]
                try:
                    child.stdin.write(serialize_request(request) + "\n")
                    child.stdin.flush()
                except (BrokenPipeError, OSError, ValueError):
                    return False
                deadlines[request.id] = time.monotonic() + self.timeout
                next_index += 1
            return True

        protocol_failure: ProtocolError | None = None
        try:
            while next_index < len(requests) or deadlines:
                if not eof and not send_while_capacity():
                    synthesize_remaining("backend closed its input pipe")
                    break
                if not deadlines:
                    continue
                wait = max(0.0, min(deadlines.values()) - time.monotonic())
                try:
                    event, payload = lines.get(timeout=wait)
                except queue.Empty:
                    now = time.monotonic()
                    expired = [i for i, d in deadlines.items() if d <= now]
                    for request_id in expired:
                        del deadlines[request_id]
                        timed_out.add(request_id)
                        results[request_id] = self._synthesized_error(
                            request_id, f"timed out after {self.timeout} s"
                        )
                    continue
                if event == "eof":
                    eof = True
                    code = child.poll()
                    detail = f" (exit code {code})" if code is not None else ""
                    synthesize_remaining(
                        f"backend terminated before responding{detail}"
                    )
                    break
                response = parse_response(payload, self.kind)
                if response is END_RECORD:
                    eof = True
                    synthesize_remaining("backend ended the stream early")
                    break
                if response.id in timed_out:
                    continue  # too late; its error response already stands
                if response.id in deadlines:
                    del deadlines[response.id]
                    results[response.id] = response
                elif response.id in results:
                    raise ProtocolError(f"duplicate response for id {response.id!r}")
                else:
                    raise ProtocolError(f"response for unknown id {response.id!r}")
        except ProtocolError as exc:
            protocol_failure = exc
        finally:
            if child.stdin and not child.stdin.closed:
                try:
                    child.stdin.write(END_LINE + "\n")
                    child.stdin.flush()
                except (BrokenPipeError, OSError, ValueError):
                    pass
                try:
                    child.stdin.close()
                except OSError:
                    pass
            try:
                child.wait(timeout=10)
            except subprocess.TimeoutExpired:
                child.kill()
                child.wait()
            reader.join(timeout=10)

        if protocol_failure is not None:
            raise protocol_failure

        # Anything left in the pipe after completion must be an end echo or a
        # late answer to a timed-out request; other lines are protocol noise.
        while True:
            try:
                event, payload = lines.get_nowait()
            except queue.Empty:
                break
            if event == "eof":
                break
            response = parse_response(payload, self.kind)
            if response is END_RECORD or response.id in timed_out:
                continue
            raise ProtocolError(f"unexpected trailing response: {payload!r}")

        return [results[request_id] for request_id in ids]


def run_asr(
    backend_command,
    requests: list[AsrRequest],
    parallelism: int = 1,
    timeout: float = 300.0,
) -> list[AsrResponse]:
    """Send ASR requests to a backend executable; one response per request,
    in request order, with synthesized error responses for timeouts and
    crashes."""
    return _ProtocolRun(backend_command, "asr", parallelism, timeout).run(requests)


def run_tts(
    backend_command,
    requests: list[TtsRequest],
    parallelism: int = 1,
    timeout: float = 300.0,
) -> list[TtsResponse]:
    """Send TTS requests to a backend executable; mirrors run_asr."""
    return _ProtocolRun(backend_command, "tts", parallelism, timeout).run(requests)
