"""Tests for manifest parsing, round-trip, stats, combine, and validate."""

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialectforge.corpus import (
    Manifest,
    ManifestError,
    Utterance,
    combine,
    compute_stats,
    load_manifest,
    save_manifest,
    validate,
)


def make_utt(uid, duration=1.0, **kwargs):
    defaults = dict(audio=f"{uid}.wav", duration_sec=duration, source="other")
    defaults.update(kwargs)
    return Utterance(id=uid, **defaults)


def write_lines(path, records):
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def test_load_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    manifest = load_manifest(str(path))
    assert manifest.utterances == []
    assert manifest.name == "empty"
    assert manifest.provenance == []


def test_load_two_records_preserves_order(tmp_path):
    path = tmp_path / "two.jsonl"
    write_lines(
        path,
        [
            {"id": "b", "audio": "b.wav", "duration_sec": 2.0, "source": "msa"},
            {"id": "a", "audio": "a.wav", "duration_sec": 1.0, "source": "msa"},
        ],
    )
    manifest = load_manifest(str(path))
    assert manifest.ids() == ["b", "a"]


def test_load_bad_confidence_names_line_and_field(tmp_path):
    path = tmp_path / "bad.jsonl"
    records = [
        {"id": f"u{i}", "audio": "a.wav", "duration_sec": 1.0, "source": "msa"}
        for i in range(4)
    ]
    records.append(
        {
            "id": "u4",
            "audio": "a.wav",
            "duration_sec": 1.0,
            "source": "msa",
            "confidence": 1.3,
        }
    )
    write_lines(path, records)
    with pytest.raises(ManifestError) as excinfo:
        load_manifest(str(path))
    assert excinfo.value.line == 5
    assert excinfo.value.field == "confidence"


def test_load_duplicate_id_reports_both_lines(tmp_path):
    path = tmp_path / "dup.jsonl"
    write_lines(
        path,
        [
            {"id": "x", "audio": "1.wav", "duration_sec": 1.0, "source": "msa"},
            {"id": "y", "audio": "2.wav", "duration_sec": 1.0, "source": "msa"},
            {"id": "x", "audio": "3.wav", "duration_sec": 1.0, "source": "msa"},
        ],
    )
    with pytest.raises(ManifestError) as excinfo:
        load_manifest(str(path))
    assert excinfo.value.line == 3
    assert "line 1" in str(excinfo.value)


def test_load_rejects_invalid_json_missing_keys_and_bad_values(tmp_path):
    cases = [
        ("{not json", 1, None),
        (json.dumps({"id": "a", "audio": "a.wav", "source": "msa"}), 1, "duration_sec"),
        (
            json.dumps(
                {"id": "a", "audio": "a.wav", "duration_sec": -1, "source": "msa"}
            ),
            1,
            "duration_sec",
        ),
        (
            json.dumps(
                {"id": "a", "audio": "a.wav", "duration_sec": 1, "source": "nope"}
            ),
            1,
            "source",
        ),
        (
            json.dumps(
                {"id": "a", "audio": "a.wav", "duration_sec": 1, "source": "pseudo"}
            ),
            1,
            "confidence",
        ),
        (
            json.dumps({"id": "", "audio": "a.wav", "duration_sec": 1, "source": "msa"}),
            1,
            "id",
        ),
    ]
    for content, line, field_name in cases:
        path = tmp_path / "case.jsonl"
        path.write_text(content + "\n", encoding="utf-8")
        with pytest.raises(ManifestError) as excinfo:
            load_manifest(str(path))
        assert excinfo.value.line == line, content
        assert excinfo.value.field == field_name, content


def test_save_omits_absent_optionals(tmp_path):
    path = tmp_path / "m.jsonl"
    manifest = Manifest(name="m", utterances=[make_utt("a")])
    save_manifest(manifest, str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    record = json.loads(lines[1])
    assert set(record) == {"id", "audio", "duration_sec", "source"}
    assert "null" not in lines[1]


def test_unknown_keys_preserved_verbatim(tmp_path):
    path = tmp_path / "m.jsonl"
    write_lines(
        path,
        [
            {
                "id": "a",
                "audio": "a.wav",
                "duration_sec": 1.0,
                "source": "msa",
                "x_custom": {"nested": [1, 2]},
                "note": None,
            }
        ],
    )
    manifest = load_manifest(str(path))
    assert manifest.utterances[0].extra == {"x_custom": {"nested": [1, 2]}, "note": None}
    out = tmp_path / "out.jsonl"
    save_manifest(manifest, str(out))
    record = json.loads(out.read_text(encoding="utf-8").splitlines()[1])
    assert record["x_custom"] == {"nested": [1, 2]}
    assert record["note"] is None


def test_headerless_file_loads_with_stem_name(tmp_path):
    path = tmp_path / "foreign.jsonl"
    write_lines(
        path, [{"id": "a", "audio": "a.wav", "duration_sec": 3.0, "source": "other"}]
    )
    manifest = load_manifest(str(path))
    assert manifest.name == "foreign"
    assert manifest.provenance == []


_utterance_strategy = st.builds(
    Utterance,
    id=st.text(alphabet="abcdefg123", min_size=1, max_size=8),
    audio=st.text(alphabet="abc/.", min_size=1, max_size=10),
    duration_sec=st.floats(min_value=0.0, max_value=1e5, allow_nan=False),
    source=st.sampled_from(["sdn-clean", "msa", "tts", "oook-unlabeled", "other"]),
    text=st.one_of(st.none(), st.text(max_size=12)),
    speaker=st.one_of(st.none(), st.sampled_from(["sp1", "sp2"])),
    confidence=st.one_of(st.none(), st.floats(min_value=0.0, max_value=1.0)),
    language=st.one_of(st.none(), st.sampled_from(["ar", "ar-SD"])),
    extra=st.dictionaries(
        keys=st.sampled_from(["x_note", "x_tag"]),
        values=st.one_of(st.integers(), st.text(max_size=5), st.none()),
        max_size=2,
    ),
)

_manifest_strategy = st.builds(
    Manifest,
    name=st.text(alphabet="abcXYZ01-_", min_size=1, max_size=8),
    utterances=st.lists(_utterance_strategy, max_size=8).map(
        lambda us: list({u.id: u for u in us}.values())
    ),
    provenance=st.lists(
        st.fixed_dictionaries(
            {
                "stage": st.sampled_from(["combine", "filter"]),
                "params": st.dictionaries(
                    st.sampled_from(["k1", "k2"]), st.integers(), max_size=2
                ),
            }
        ),
        max_size=3,
    ),
)


@settings(max_examples=150)
@given(_manifest_strategy)
def test_round_trip_reproduces_manifest(tmp_path_factory, manifest):
    path = tmp_path_factory.mktemp("rt") / "m.jsonl"
    save_manifest(manifest, str(path))
    assert load_manifest(str(path)) == manifest


def test_round_trip_empty_manifest_has_zero_data_lines(tmp_path):
    path = tmp_path / "m.jsonl"
    save_manifest(Manifest(name="m", provenance=[{"stage": "s", "params": {}}]), str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1  # metadata header only, zero data lines
    manifest = load_manifest(str(path))
    assert manifest.name == "m"
    assert manifest.provenance == [{"stage": "s", "params": {}}]
    assert manifest.utterances == []


def test_save_is_byte_stable(tmp_path):
    manifest = Manifest(
        name="m",
        utterances=[make_utt("a", text="t", confidence=0.5, extra={"z": 1})],
    )
    first = tmp_path / "1.jsonl"
    second = tmp_path / "2.jsonl"
    save_manifest(manifest, str(first))
    save_manifest(manifest, str(second))
    assert first.read_bytes() == second.read_bytes()


def test_compute_stats_small_arithmetic():
    manifest = Manifest(
        name="m", utterances=[make_utt("a", 1.5), make_utt("b", 2.5)]
    )
    stats = compute_stats(manifest)
    assert stats.utterance_count == 2
    assert stats.total_hours == pytest.approx(4 / 3600)
    assert stats.distinct_speakers == 0
    assert stats.labeled_count == 0


def test_compute_stats_speakers_labels_histogram():
    utts = [
        make_utt("a", 1.0, speaker="sp1", text="x", confidence=0.0),
        make_utt("b", 1.0, speaker="sp1", confidence=1.0),
        make_utt("c", 1.0, speaker="sp2", confidence=0.95),
        make_utt("d", 1.0, confidence=0.05),
    ]
    stats = compute_stats(Manifest(name="m", utterances=utts))
    assert stats.distinct_speakers == 2
    assert stats.labeled_count == 1
    assert stats.confidence_histogram[0] == 2  # 0.0 and 0.05
    assert stats.confidence_histogram[9] == 2  # 0.95 and 1.0
    assert sum(stats.confidence_histogram) == 4


def stats_with_hours(hours):
    from dialectforge.corpus import DatasetStats

    return DatasetStats(
        utterance_count=0,
        total_hours=hours,
        distinct_speakers=0,
        labeled_count=0,
        confidence_histogram=[0] * 10,
    )


def test_reported_hours_rounds_half_up():
    assert stats_with_hours(15.195).reported_hours == 15.2
    assert stats_with_hours(0.005).reported_hours == 0.01
    assert stats_with_hours(0.004999).reported_hours == 0.0


def hours_manifest(name, hours, prefix, clip_seconds=36.0):
    """Manifest of equal-length clips whose durations sum to exactly `hours`."""
    count = round(hours * 3600 / clip_seconds)
    assert abs(count * clip_seconds - hours * 3600) < 1e-6
    utts = [
        make_utt(f"{prefix}{i}", clip_seconds, source="sdn-clean")
        for i in range(count)
    ]
    return Manifest(name=name, utterances=utts)


def test_combine_reproduces_component_sum_hours():
    sdn = hours_manifest("sdn-clean", 3.93, "s")
    pseudo = hours_manifest("pseudo07", 11.27, "p")
    combined = compute_stats(combine([sdn, pseudo], "sdn+pseudo07"))
    assert abs(combined.total_hours - 15.2) <= 0.05
    assert combined.utterance_count == 393 + 1127


def test_combine_hour_additivity_exact():
    parts = [
        Manifest(name=f"m{k}", utterances=[make_utt(f"{k}-{i}", 0.1 + 0.37 * i) for i in range(25)])
        for k in range(4)
    ]
    total = compute_stats(combine(parts, "all")).total_hours
    expected = math.fsum(compute_stats(p).total_hours for p in parts)
    assert abs(total - expected) <= 1e-9 * max(abs(expected), 1.0)


def test_combine_rewrites_only_colliding_ids():
    a = Manifest(name="A", utterances=[make_utt("x"), make_utt("only-a")])
    b = Manifest(name="B", utterances=[make_utt("x"), make_utt("only-b")])
    result = combine([a, b], "ab")
    assert result.ids() == ["A/x", "only-a", "B/x", "only-b"]


def test_combine_single_part_keeps_ids_extends_provenance():
    m = Manifest(
        name="m",
        utterances=[make_utt("a"), make_utt("b")],
        provenance=[{"stage": "origin", "params": {}}],
    )
    result = combine([m], "m")
    assert result.ids() == ["a", "b"]
    assert result.utterances == m.utterances
    assert result.provenance[0] == {"stage": "origin", "params": {}}
    assert result.provenance[-1]["stage"] == "combine"
    assert result.provenance[-1]["params"]["parts"] == ["m"]


def test_combine_duplicate_part_names_with_shared_id_errors():
    a = Manifest(name="same", utterances=[make_utt("x")])
    b = Manifest(name="same", utterances=[make_utt("x")])
    with pytest.raises(ManifestError, match="same"):
        combine([a, b], "out")


def test_combine_rejects_empty_parts():
    with pytest.raises(ManifestError):
        combine([], "out")


@given(st.lists(_manifest_strategy, min_size=1, max_size=4))
def test_combine_never_emits_duplicate_ids(parts):
    # Give parts distinct names so collisions are always resolvable.
    for index, part in enumerate(parts):
        part.name = f"part{index}"
    result = combine(parts, "out")
    ids = result.ids()
    assert len(ids) == len(set(ids))
    assert len(ids) == sum(len(p.utterances) for p in parts)


def test_validate_clean_fixture():
    manifest = Manifest(name="m", utterances=[make_utt("a"), make_utt("b")])
    assert validate(manifest) == []


def test_validate_pseudo_without_confidence_names_id():
    bad = make_utt("p1", source="pseudo")
    violations = validate(Manifest(name="m", utterances=[bad]))
    assert len(violations) == 1
    assert violations[0]["id"] == "p1"
    assert violations[0]["field"] == "confidence"


def test_validate_reports_every_violation():
    utts = [
        make_utt("ok"),
        make_utt("neg", duration=-2.0),
        make_utt("conf", confidence=1.5),
        make_utt("conf", confidence=0.5),  # duplicate id
    ]
    violations = validate(Manifest(name="m", utterances=utts))
    fields = sorted(v["field"] for v in violations)
    assert fields == ["confidence", "duration_sec", "id"]


def test_validate_missing_audio_file(tmp_path):
    (tmp_path / "present.wav").write_bytes(b"")
    utts = [
        make_utt("a", audio="present.wav"),
        make_utt("b", audio="missing.wav"),
    ]
    violations = validate(Manifest(name="m", utterances=utts), audio_root=str(tmp_path))
    assert len(violations) == 1
    assert violations[0]["id"] == "b"
    assert violations[0]["field"] == "audio"
