"""Serve loop and executable entry point.

Requests are processed serially in arrival order (model inference is the
bottleneck; the client side provides pipelining). Per-request failures
become error responses; the stream only ends at the end record or EOF.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

from .protocol import (
    END,
    END_LINE,
    AsrJob,
    TtsJob,
    asr_response_line,
    error_response_line,
    parse_request_line,
    tts_response_line,
)


@dataclass(frozen=True)
class AdapterConfig:
    model: str
    device: str = "cpu"
    beam_size: int = 1
    temperature: float = 0.0

    def __post_init__(self):
        if not self.model:
            raise ValueError("model identifier must be non-empty")
        if self.beam_size < 1:
            raise ValueError(f"beam size must be >= 1, got {self.beam_size}")
        if self.temperature < 0.0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")


def build_engine(config: AdapterConfig, task: str):
    from .engines import FastSpeechTtsEngine, WhisperAsrEngine

    if task == "asr":
        return WhisperAsrEngine(
            config.model,
            device=config.device,
            beam_size=config.beam_size,
            temperature=config.temperature,
        )
    return FastSpeechTtsEngine(config.model, device=config.device)


def serve(task: str, engine, stdin=None, stdout=None) -> int:
    """Answer requests until the end record (echoed) or EOF (quiet close)."""
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    while True:
        raw = stdin.readline()
        if not raw:
            return 0
        line = raw.decode("utf-8").rstrip("\n")
        if not line.strip():
            continue
        request = parse_request_line(line)
        if request is END:
            stdout.write((END_LINE + "\n").encode("utf-8"))
            stdout.flush()
            return 0
        if isinstance(request, AsrJob):
            if task != "asr":
                response = error_response_line(request.id, "asr not served by this task")
            else:
                try:
                    text, confidence, language = engine.transcribe(request.audio)
                    confidence = min(1.0, max(0.0, float(confidence)))
                    response = asr_response_line(request.id, text, confidence, language)
                except Exception as exc:
                    response = error_response_line(
                        request.id, str(exc) or type(exc).__name__
                    )
        else:
            assert isinstance(request, TtsJob)
            if task != "tts":
                response = error_response_line(request.id, "tts not served by this task")
            else:
                try:
                    out_audio, duration = engine.synthesize(
                        request.text, request.voice, request.out_audio
                    )
                    response = tts_response_line(request.id, out_audio, float(duration))
                except Exception as exc:
                    response = error_response_line(
                        request.id, str(exc) or type(exc).__name__
                    )
        stdout.write((response + "\n").encode("utf-8"))
        stdout.flush()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hfadapter",
        description="Whisper/FastSpeech2 backend speaking the pipeline wire protocol.",
    )
    parser.add_argument("--model", required=True, help="checkpoint path or hub id")
    parser.add_argument("--device", default="cpu", help="torch device string")
    parser.add_argument("--task", choices=("asr", "tts"), default="asr")
    parser.add_argument("--beam-size", type=int, default=1)
    parser.add_argument("--temperature", type=float, default=0.0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = AdapterConfig(
            model=args.model,
            device=args.device,
            beam_size=args.beam_size,
            temperature=args.temperature,
        )
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    resolved = {
        "model": config.model,
        "device": config.device,
        "task": args.task,
        "beam_size": config.beam_size,
        "temperature": config.temperature,
    }
    # Decoding settings are recorded per run on stderr; response records are
    # fixed by the wire format and carry no extra keys.
    print(f"config: {json.dumps(resolved, sort_keys=True)}", file=sys.stderr)
    try:
        engine = build_engine(config, args.task)
    except Exception as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return 1
    return serve(args.task, engine)


if __name__ == "__main__":
    sys.exit(main())
