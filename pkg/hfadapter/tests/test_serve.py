"""Serve-loop conformance: framing, ordering, golden transcripts.

The golden byte streams are duplicated verbatim in the pipeline package's
mock-backend suite; both backends must produce them for the same requests.
"""

import io
import json
import wave

import pytest

from fakes import FakeAsrEngine, FakeTtsEngine
from hfadapter.protocol import ProtocolError
from hfadapter.serve import serve

GOLDEN_ASR_REQUESTS = [
    '{"type":"asr","id":"u1","audio":"clips/u1.wav"}',
    '{"type":"asr","id":"u2","audio":"clips/u2.wav"}',
    '{"type":"tts","id":"j1","text":"نص","voice":"v0","out_audio":"j1.wav"}',
    '{"type":"end"}',
]
GOLDEN_ASR_RESPONSES = [
    '{"id":"u1","text":"ذهب الولد الى السوق","confidence":0.95,"language":"ar"}',
    '{"id":"u2","text":"كتب الطالب الدرس","confidence":0.95,"language":"ar"}',
    '{"id":"j1","error":"tts not served by this task"}',
    '{"type":"end"}',
]
GOLDEN_TTS_REQUESTS = [
    '{"type":"tts","id":"j1","text":"جملة اولى","voice":"v0","out_audio":"out/j1.wav"}',
    '{"type":"tts","id":"j2","text":"جملة ثانية","voice":"v0","out_audio":"out/j2.wav"}',
    '{"type":"asr","id":"u9","audio":"u9.wav"}',
    '{"type":"end"}',
]
GOLDEN_TTS_RESPONSES = [
    '{"id":"j1","out_audio":"out/j1.wav","duration_sec":0.5}',
    '{"id":"j2","out_audio":"out/j2.wav","duration_sec":0.5}',
    '{"id":"u9","error":"asr not served by this task"}',
    '{"type":"end"}',
]

GOLDEN_ENGINE = FakeAsrEngine(
    {
        "clips/u1.wav": ("ذهب الولد الى السوق", 0.95, "ar"),
        "clips/u2.wav": ("كتب الطالب الدرس", 0.95, "ar"),
    }
)


def run_serve(task, engine, request_lines):
    stdin = io.BytesIO("".join(line + "\n" for line in request_lines).encode("utf-8"))
    stdout = io.BytesIO()
    code = serve(task, engine, stdin=stdin, stdout=stdout)
    return code, stdout.getvalue()


def test_end_record_echoes_end():
    code, out = run_serve("asr", FakeAsrEngine({}), ['{"type":"end"}'])
    assert code == 0
    assert out == b'{"type":"end"}\n'


def test_eof_without_end_closes_quietly():
    code, out = run_serve("asr", FakeAsrEngine({}), [])
    assert code == 0
    assert out == b""


def test_blank_lines_are_skipped():
    code, out = run_serve("asr", FakeAsrEngine({}), ["", "   ", '{"type":"end"}'])
    assert code == 0
    assert out == b'{"type":"end"}\n'


def test_golden_asr_transcript_bytes():
    code, out = run_serve("asr", GOLDEN_ENGINE, GOLDEN_ASR_REQUESTS)
    assert code == 0
    assert out == "".join(line + "\n" for line in GOLDEN_ASR_RESPONSES).encode("utf-8")


def test_golden_tts_transcript_bytes(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "out").mkdir()
    code, out = run_serve("tts", FakeTtsEngine(clip_seconds=0.5), GOLDEN_TTS_REQUESTS)
    assert code == 0
    assert out == "".join(line + "\n" for line in GOLDEN_TTS_RESPONSES).encode("utf-8")
    with wave.open(str(tmp_path / "out" / "j1.wav")) as handle:
        assert handle.getnchannels() == 1
        assert handle.getsampwidth() == 2
        assert handle.getframerate() == 16000
        assert handle.getnframes() == 8000
        assert handle.readframes(8000) == b"\x00\x00" * 8000


def test_byte_identical_streams_for_identical_input():
    first = run_serve("asr", GOLDEN_ENGINE, GOLDEN_ASR_REQUESTS)
    second = run_serve("asr", GOLDEN_ENGINE, GOLDEN_ASR_REQUESTS)
    assert first == second
    assert first[0] == 0


def test_responses_follow_request_arrival_order():
    requests = [
        f'{{"type":"asr","id":"r{i}","audio":"{path}"}}'
        for i, path in enumerate(
            ["clips/u2.wav", "missing.wav", "clips/u1.wav", "missing2.wav"]
        )
    ] + ['{"type":"end"}']
    code, out = run_serve("asr", GOLDEN_ENGINE, requests)
    assert code == 0
    ids = [json.loads(line).get("id") for line in out.decode("utf-8").splitlines()]
    assert ids == ["r0", "r1", "r2", "r3", None]  # end record has no id


def test_engine_failure_becomes_error_response_and_stream_continues():
    requests = [
        '{"type":"asr","id":"ghost","audio":"g.wav"}',
        '{"type":"asr","id":"u1","audio":"clips/u1.wav"}',
        '{"type":"end"}',
    ]
    code, out = run_serve("asr", GOLDEN_ENGINE, requests)
    assert code == 0
    lines = out.decode("utf-8").splitlines()
    first = json.loads(lines[0])
    assert first["id"] == "ghost"
    assert "error" in first and "g.wav" in first["error"]
    assert set(first) == {"id", "error"}
    assert json.loads(lines[1])["text"] == "ذهب الولد الى السوق"
    assert lines[2] == '{"type":"end"}'


def test_task_mismatch_answers_error_without_calling_engine():
    class ExplodingEngine:
        def transcribe(self, audio_path):
            raise AssertionError("must not be called")

        def synthesize(self, text, voice, out_audio):
            raise AssertionError("must not be called")

    code, out = run_serve(
        "tts", ExplodingEngine(), ['{"type":"asr","id":"u9","audio":"u9.wav"}', '{"type":"end"}']
    )
    assert code == 0
    first = json.loads(out.decode("utf-8").splitlines()[0])
    assert first == {"id": "u9", "error": "asr not served by this task"}


def test_out_of_range_engine_confidence_is_clamped():
    class OverconfidentEngine:
        def transcribe(self, audio_path):
            return "نص", 1.5, "ar"

    code, out = run_serve(
        "asr",
        OverconfidentEngine(),
        ['{"type":"asr","id":"u1","audio":"a.wav"}', '{"type":"end"}'],
    )
    assert code == 0
    assert json.loads(out.decode("utf-8").splitlines()[0])["confidence"] == 1.0


def test_malformed_request_raises_protocol_error():
    with pytest.raises(ProtocolError):
        run_serve("asr", FakeAsrEngine({}), ["this is not json"])


def test_tts_write_failure_becomes_error_response(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    requests = [
        '{"type":"tts","id":"j1","text":"نص","voice":"v0","out_audio":"no-dir/j1.wav"}',
        '{"type":"end"}',
    ]
    code, out = run_serve("tts", FakeTtsEngine(), requests)
    assert code == 0
    first = json.loads(out.decode("utf-8").splitlines()[0])
    assert first["id"] == "j1"
    assert "error" in first
