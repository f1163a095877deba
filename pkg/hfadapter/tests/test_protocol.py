"""Wire format: canonical bytes, validation, end records."""

import pytest

from hfadapter.protocol import (
    END,
    AsrJob,
    ProtocolError,
    TtsJob,
    asr_response_line,
    error_response_line,
    parse_request_line,
    parse_response_line,
    tts_response_line,
)

# Canonical lines shared with the pipeline side of the protocol; the exact
# bytes are the contract.
ASR_REQUEST = '{"type":"asr","id":"u1","audio":"clips/u1.wav"}'
TTS_REQUEST = '{"type":"tts","id":"j1","text":"نص","voice":"v0","out_audio":"j1.wav"}'
ASR_SUCCESS = '{"id":"u1","text":"نص عربي","confidence":0.95,"language":"ar"}'
ASR_ERROR = '{"id":"u1","error":"decode failed"}'
TTS_SUCCESS = '{"id":"j1","out_audio":"j1.wav","duration_sec":1.0}'
TTS_ERROR = '{"id":"j1","error":"synthesis failed"}'


def test_asr_request_parses_to_job():
    job = parse_request_line(ASR_REQUEST)
    assert job == AsrJob(id="u1", audio="clips/u1.wav")


def test_tts_request_parses_to_job():
    job = parse_request_line(TTS_REQUEST)
    assert job == TtsJob(id="j1", text="نص", voice="v0", out_audio="j1.wav")


def test_end_recognized_in_both_directions():
    assert parse_request_line('{"type":"end"}') is END
    assert parse_response_line('{"type":"end"}', "asr") is END
    assert parse_response_line('{"type":"end"}', "tts") is END


def test_response_serializers_emit_canonical_bytes():
    assert asr_response_line("u1", "نص عربي", 0.95, "ar") == ASR_SUCCESS
    assert error_response_line("u1", "decode failed") == ASR_ERROR
    assert tts_response_line("j1", "j1.wav", 1.0) == TTS_SUCCESS
    assert error_response_line("j1", "synthesis failed") == TTS_ERROR


def test_serialized_responses_parse_back():
    assert parse_response_line(ASR_SUCCESS, "asr")["confidence"] == 0.95
    assert parse_response_line(ASR_ERROR, "asr")["error"] == "decode failed"
    assert parse_response_line(TTS_SUCCESS, "tts")["duration_sec"] == 1.0
    assert parse_response_line(TTS_ERROR, "tts")["error"] == "synthesis failed"


@pytest.mark.parametrize(
    "line",
    [
        "not json",
        "[1, 2]",
        '{"type":"asr","id":"u1"}',
        '{"type":"asr","id":5,"audio":"a.wav"}',
        '{"type":"tts","id":"j1","text":"x","voice":"v"}',
        '{"type":"mystery","id":"u1"}',
        "{}",
    ],
)
def test_bad_request_lines_raise(line):
    with pytest.raises(ProtocolError):
        parse_request_line(line)


@pytest.mark.parametrize(
    ("line", "kind"),
    [
        ('{"text":"x","confidence":0.5,"language":"ar"}', "asr"),
        ('{"id":"u1","confidence":0.5,"language":"ar"}', "asr"),
        ('{"id":"u1","text":"x","confidence":1.5,"language":"ar"}', "asr"),
        ('{"id":"u1","text":"x","confidence":true,"language":"ar"}', "asr"),
        ('{"id":"u1","text":"x","confidence":0.5}', "asr"),
        ('{"id":"u1","error":"x","text":"y"}', "asr"),
        ('{"id":"u1","error":7}', "asr"),
        ('{"id":"j1","duration_sec":1.0}', "tts"),
        ('{"id":"j1","out_audio":"a.wav","duration_sec":0}', "tts"),
        ('{"id":"j1","out_audio":"a.wav","duration_sec":-1.0}', "tts"),
    ],
)
def test_bad_response_lines_raise(line, kind):
    with pytest.raises(ProtocolError):
        parse_response_line(line, kind)


def test_out_of_range_serializer_inputs_raise():
    with pytest.raises(ProtocolError):
        asr_response_line("u1", "x", 1.01, "ar")
    with pytest.raises(ProtocolError):
        asr_response_line("u1", "x", -0.01, "ar")
    with pytest.raises(ProtocolError):
        tts_response_line("j1", "a.wav", 0.0)


def test_unicode_survives_round_trip():
    line = asr_response_line("u1", "ذهب الولد", 0.5, "ar")
    assert "ذهب الولد" in line  # ensure_ascii off keeps raw Arabic bytes
    assert parse_response_line(line, "asr")["text"] == "ذهب الولد"
