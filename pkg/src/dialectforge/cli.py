"""Command line entry point: one subcommand per pipeline stage.

Stages read and write files named on the command line and never mutate their
inputs, so recipes compose as plain shell scripts. Every run prints its fully
resolved configuration to stderr before doing anything, and every subcommand
is a pure function of (inputs, flags, seed): identical invocations produce
byte-identical outputs.

Exit codes: 0 success, 1 data errors, 2 usage errors.

File formats beyond the manifest:
  tokens     JSONL {"sentence_id": str, "position": int, "surface": str}
  sentences  JSONL {"sentence_id": str, "text": str}
  jobs       synthesis request lines in the backend wire format
  responses  synthesis response lines in the backend wire format

The DIALECT_FORGE_LOG environment variable sets the log level (default
WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis, artext, augment, backend, corpus, metrics

log = logging.getLogger("dialectforge")


class UsageError(Exception):
    """Flag value outside its documented domain."""


# ------------------------------------------------------------ file helpers


def _read_jsonl(path: str):
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{number}: malformed JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise ValueError(f"{path}:{number}: expected an object")
            yield number, record


def read_tokens(path: str) -> list[tuple[str, int, str]]:
    tokens = []
    for number, record in _read_jsonl(path):
        sentence_id = record.get("sentence_id")
        position = record.get("position")
        surface = record.get("surface")
        if (
            not isinstance(sentence_id, str)
            or not isinstance(position, int)
            or isinstance(position, bool)
            or not isinstance(surface, str)
        ):
            raise ValueError(
                f"{path}:{number}: token rows need string sentence_id, "
                "integer position, string surface"
            )
        tokens.append((sentence_id, position, surface))
    return tokens


def read_sentences(path: str) -> list[tuple[str, str]]:
    sentences = []
    for number, record in _read_jsonl(path):
        sentence_id = record.get("sentence_id")
        text = record.get("text")
        if not isinstance(sentence_id, str) or not isinstance(text, str):
            raise ValueError(
                f"{path}:{number}: sentence rows need string sentence_id and text"
            )
        sentences.append((sentence_id, text))
    return sentences


def write_sentences(path: str, sentences: list[tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for sentence_id, text in sentences:
            record = {"sentence_id": sentence_id, "text": text}
            handle.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
            handle.write("\n")


def read_id_file(path: str) -> set[str]:
    with open(path, encoding="utf-8") as handle:
        return {line.strip() for line in handle if line.strip()}


def read_tts_jobs(path: str) -> list[backend.TtsRequest]:
    jobs = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            request = backend.parse_request(line)
            if request is backend.END_RECORD:
                continue
            if not isinstance(request, backend.TtsRequest):
                raise ValueError(f"{path}:{number}: not a synthesis request")
            jobs.append(request)
    return jobs


def read_tts_responses(path: str) -> list[backend.TtsResponse]:
    responses = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            response = backend.parse_response(line, "tts")
            if response is not backend.END_RECORD:
                responses.append(response)
    return responses


def parse_policy(text: str) -> artext.NormalizationPolicy:
    """Comma-separated step names; a `no-` prefix disables a default.

    Example: "unify-alef-variants,no-strip-diacritics". The word "default"
    (or an empty string) keeps the default policy.
    """
    values = artext.DEFAULT_POLICY.to_dict()
    cleaned = text.strip()
    if cleaned and cleaned != "default":
        for token in cleaned.split(","):
            token = token.strip().replace("-", "_")
            if not token:
                continue
            enabled = True
            if token.startswith("no_"):
                enabled = False
                token = token[3:]
            if token not in values:
                raise UsageError(f"unknown normalization step {token!r}")
            values[token] = enabled
    return artext.NormalizationPolicy.from_dict(values)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise UsageError(message)


# -------------------------------------------------------------- subcommands


def cmd_stats(args) -> int:
    manifest = corpus.load_manifest(args.manifest)
    stats = corpus.compute_stats(manifest)
    print(f"name={manifest.name}")
    print(f"utterances={stats.utterance_count}")
    print(f"labeled={stats.labeled_count}")
    print(f"distinct_speakers={stats.distinct_speakers}")
    print(f"total_hours={stats.reported_hours:.2f}")
    print(f"confidence_histogram={json.dumps(stats.confidence_histogram)}")
    return 0


def cmd_validate(args) -> int:
    manifest = corpus.load_manifest(args.manifest)
    issues = corpus.validate(manifest, audio_root=args.audio_root)
    for issue in issues:
        print(f"id={issue['id']} field={issue['field']}: {issue['message']}")
    print(f"issues={len(issues)}")
    return 1 if issues else 0


def cmd_combine(args) -> int:
    parts = [corpus.load_manifest(path) for path in args.inputs]
    name = args.name if args.name is not None else Path(args.out).stem
    combined = corpus.combine(parts, name=name)
    corpus.save_manifest(combined, args.out)
    print(f"utterances={len(combined.utterances)}")
    return 0


def cmd_density_filter(args) -> int:
    _require(0.0 <= args.threshold <= 100.0, "--threshold must be in [0, 100]")
    sentences = read_sentences(args.input)
    reports = [
        artext.diacritic_density(text, args.threshold) for _, text in sentences
    ]
    kept = [
        (sentence_id, report.sentence)
        for (sentence_id, _), report in zip(sentences, reports)
        if report.retained
    ]
    write_sentences(args.out, kept)
    if args.report is not None:
        with open(args.report, "w", encoding="utf-8") as handle:
            for (sentence_id, _), report in zip(sentences, reports):
                record = {
                    "sentence_id": sentence_id,
                    "letters_and_marks": report.n,
                    "diacritic_count": report.diacritic_count,
                    "density_percent": report.density_percent,
                    "retained": report.retained,
                    "degenerate": report.degenerate,
                }
                handle.write(
                    json.dumps(record, ensure_ascii=False, separators=(",", ":"))
                )
                handle.write("\n")
    print(f"retained={len(kept)}")
    print(f"dropped={len(sentences) - len(kept)}")
    print(f"degenerate={sum(1 for r in reports if r.degenerate)}")
    return 0


def cmd_reconstruct(args) -> int:
    sentences = artext.reconstruct_sentences(read_tokens(args.tokens))
    write_sentences(args.out, sentences)
    print(f"sentences={len(sentences)}")
    return 0


def cmd_pseudo_label(args) -> int:
    _require(args.parallelism >= 1, "--parallelism must be >= 1")
    _require(args.timeout > 0, "--timeout must be positive")
    manifest = corpus.load_manifest(args.unlabeled)
    provenance = manifest.provenance
    utterances = manifest.utterances
    if args.exclude_ids is not None:
        excluded = read_id_file(args.exclude_ids)
        utterances = [u for u in utterances if u.id not in excluded]
        provenance = manifest.with_stage(
            "exclude-ids", excluded=len(manifest.utterances) - len(utterances)
        )
    working = corpus.Manifest(
        name=manifest.name, utterances=utterances, provenance=provenance
    )
    requests = [backend.AsrRequest(id=u.id, audio=u.audio) for u in utterances]
    responses = backend.run_asr(
        args.backend, requests, parallelism=args.parallelism, timeout=args.timeout
    )
    entries = []
    failures = []
    for response in responses:
        if response.is_error:
            failures.append(response)
            continue
        entries.append(
            augment.PseudoLabelEntry(
                utterance_id=response.id,
                hypothesis_text=response.text,
                confidence=response.confidence,
                language=response.language,
            )
        )
    batch = augment.PseudoLabelBatch(entries=entries, teacher_id=args.teacher_id)
    labeled = augment.build_pseudo_manifest(working, batch)
    corpus.save_manifest(labeled, args.out)
    for failure in failures:
        print(f"backend error: id={failure.id}: {failure.error}", file=sys.stderr)
    print(f"labeled={len(labeled.utterances)}")
    print(f"failed={len(failures)}")
    return 1 if failures else 0


def cmd_confidence_filter(args) -> int:
    _require(0.0 <= args.threshold <= 1.0, "--threshold must be in [0, 1]")
    manifest = corpus.load_manifest(args.input)
    filtered = augment.filter_by_confidence(manifest, args.threshold)
    corpus.save_manifest(filtered, args.out)
    params = filtered.provenance[-1]["params"]
    print(f"kept={params['kept']}")
    print(f"dropped={params['dropped']}")
    return 0


def cmd_tts_prepare(args) -> int:
    sentences = read_sentences(args.sentences)
    jobs = augment.prepare_tts_jobs(sentences, voice=args.voice)
    with open(args.jobs, "w", encoding="utf-8") as handle:
        for job in jobs:
            handle.write(backend.serialize_request(job))
            handle.write("\n")
    print(f"jobs={len(jobs)}")
    return 0


def cmd_tts_run(args) -> int:
    _require(args.parallelism >= 1, "--parallelism must be >= 1")
    _require(args.timeout > 0, "--timeout must be positive")
    jobs = read_tts_jobs(args.jobs)
    if args.audio_dir is not None:
        os.makedirs(args.audio_dir, exist_ok=True)
        jobs = [
            replace(job, out_audio=str(Path(args.audio_dir) / job.out_audio))
            for job in jobs
        ]
    responses = backend.run_tts(
        args.backend, jobs, parallelism=args.parallelism, timeout=args.timeout
    )
    with open(args.responses, "w", encoding="utf-8") as handle:
        for response in responses:
            handle.write(backend.serialize_response(response))
            handle.write("\n")
    failures = [response for response in responses if response.is_error]
    for failure in failures:
        print(f"backend error: id={failure.id}: {failure.error}", file=sys.stderr)
    print(f"synthesized={len(responses) - len(failures)}")
    print(f"failed={len(failures)}")
    return 1 if failures else 0


def cmd_tts_assemble(args) -> int:
    jobs = read_tts_jobs(args.jobs)
    responses = read_tts_responses(args.responses)
    manifest = augment.assemble_tts_manifest(jobs, responses, name=args.name)
    corpus.save_manifest(manifest, args.out)
    params = manifest.provenance[-1]["params"]
    print(f"synthesized={params['succeeded']}")
    print(f"failed={params['failures']}")
    print(f"missing={params['missing']}")
    return 0


def cmd_evaluate(args) -> int:
    policy = parse_policy(args.policy)
    refs = corpus.load_manifest(args.refs)
    hyps = corpus.load_manifest(args.hyps)
    ref_ids = set(refs.ids())
    unknown = [u.id for u in hyps.utterances if u.id not in ref_ids]
    if unknown:
        raise ValueError(
            f"hypothesis ids missing from references: {sorted(unknown)[:10]}"
        )
    hyp_texts = {u.id: u.text if u.text is not None else "" for u in hyps.utterances}
    pairs = []
    for utterance in refs.utterances:
        if utterance.text is None:
            raise ValueError(f"reference utterance {utterance.id!r} has no text")
        pairs.append((utterance.id, utterance.text, hyp_texts.get(utterance.id, "")))
    report = metrics.score_corpus(
        pairs, policy=policy, include_alignments=args.alignments
    )
    report.save(args.out)
    print(f"corpus_wer_percent={report.corpus_wer_percent}")
    print(f"corpus_cer_percent={report.corpus_cer_percent}")
    print(f"utterances={len(report.per_utterance)}")
    print(f"excluded_empty_ref={report.excluded_count}")
    return 0


def cmd_analyze_errors(args) -> int:
    _require(args.top_n >= 1, "--top-n must be >= 1")
    _require(args.ratio > 0, "--ratio must be positive")
    _require(0.0 <= args.script_frac <= 1.0, "--script-frac must be in [0, 1]")
    report = metrics.EvalReport.load(args.report)
    languages = None
    if args.languages is not None:
        with open(args.languages, encoding="utf-8") as handle:
            languages = json.load(handle)
        if not isinstance(languages, dict):
            raise ValueError(f"{args.languages}: expected an id-to-tag object")
    errors = analysis.build_error_report(
        report,
        backend_languages=languages,
        top_n=args.top_n,
        length_ratio_threshold=args.ratio,
        script_fraction_threshold=args.script_frac,
    )
    if args.out is not None:
        errors.save(args.out, csv_path=args.csv)
        print(f"language_failures={errors.language_failure_count}")
        print(f"hallucinations={errors.hallucination_count}")
    else:
        if args.csv is not None:
            errors.save_confusions_csv(args.csv)
        print(json.dumps(errors.to_json_dict(), ensure_ascii=False, indent=2))
    return 0


def cmd_emit_recipe(args) -> int:
    overrides = {
        "steps": args.steps,
        "learning_rate": args.learning_rate,
        "warmup_steps": args.warmup_steps,
        "train_batch_size": args.train_batch_size,
        "eval_batch_size": args.eval_batch_size,
    }
    overrides = {key: value for key, value in overrides.items() if value is not None}
    recipe = augment.emit_recipe(
        args.train, args.eval, args.base_model, out_path=args.out, **overrides
    )
    sys.stdout.write(recipe.to_text())
    return 0


# -------------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialect-forge",
        description="Pipeline stages for low-resource dialect ASR development.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="<command>")

    def add(name: str, handler, help_text: str):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--seed", type=int, default=0, help="run seed (recorded)")
        p.set_defaults(handler=handler)
        return p

    p = add("stats", cmd_stats, "print manifest statistics")
    p.add_argument("manifest")

    p = add("validate", cmd_validate, "check a manifest field by field")
    p.add_argument("manifest")
    p.add_argument("--audio-root", default=None, help="verify audio paths exist here")

    p = add("combine", cmd_combine, "merge manifests, renaming id collisions")
    p.add_argument("out")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--name", default=None, help="combined manifest name")

    p = add("density-filter", cmd_density_filter, "keep densely diacritized sentences")
    p.add_argument("input")
    p.add_argument("out")
    p.add_argument("--threshold", type=float, required=True, help="minimum density %%")
    p.add_argument("--report", default=None, help="write per-sentence densities here")

    p = add("reconstruct", cmd_reconstruct, "assemble sentences from token rows")
    p.add_argument("tokens")
    p.add_argument("out")

    p = add("pseudo-label", cmd_pseudo_label, "transcribe unlabeled audio via a backend")
    p.add_argument("unlabeled")
    p.add_argument("out")
    p.add_argument("--backend", required=True, help="backend command line")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--timeout", type=float, default=300.0, help="seconds per request")
    p.add_argument("--exclude-ids", default=None, help="file of ids to skip")
    p.add_argument("--teacher-id", default="backend", help="teacher tag in provenance")

    p = add("confidence-filter", cmd_confidence_filter, "keep confident pseudo-labels")
    p.add_argument("input")
    p.add_argument("out")
    p.add_argument("--threshold", type=float, required=True)

    p = add("tts-prepare", cmd_tts_prepare, "turn sentences into synthesis jobs")
    p.add_argument("sentences")
    p.add_argument("jobs")
    p.add_argument("--voice", default="default")

    p = add("tts-run", cmd_tts_run, "run synthesis jobs through a backend")
    p.add_argument("jobs")
    p.add_argument("responses")
    p.add_argument("--backend", required=True, help="backend command line")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--timeout", type=float, default=300.0, help="seconds per request")
    p.add_argument("--audio-dir", default=None, help="write audio under this directory")

    p = add("tts-assemble", cmd_tts_assemble, "build a manifest from synthesis output")
    p.add_argument("jobs")
    p.add_argument("responses")
    p.add_argument("out")
    p.add_argument("--name", default="tts")

    p = add("evaluate", cmd_evaluate, "score hypothesis manifest against references")
    p.add_argument("refs")
    p.add_argument("hyps")
    p.add_argument("--out", required=True, help="evaluation report path")
    p.add_argument(
        "--policy",
        default="default",
        help="normalization steps, e.g. unify-alef-variants,no-strip-diacritics",
    )
    p.add_argument("--alignments", action="store_true", help="store edit alignments")

    p = add("analyze-errors", cmd_analyze_errors, "error taxonomy over a report")
    p.add_argument("report")
    p.add_argument("--top-n", type=int, default=20)
    p.add_argument("--ratio", type=float, default=2.0, help="hallucination length ratio")
    p.add_argument("--script-frac", type=float, default=0.5, help="Arabic letter fraction")
    p.add_argument("--languages", default=None, help="JSON object of id to language tag")
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--csv", default=None, help="write the confusion table here")

    p = add("emit-recipe", cmd_emit_recipe, "write a training recipe file")
    p.add_argument("train")
    p.add_argument("eval")
    p.add_argument("--base-model", required=True)
    p.add_argument("--out", default=None, help="recipe path (stdout always gets a copy)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--warmup-steps", type=int, default=None)
    p.add_argument("--train-batch-size", type=int, default=None)
    p.add_argument("--eval-batch-size", type=int, default=None)

    return parser


def _print_config(args: argparse.Namespace) -> None:
    resolved = {
        key: value for key, value in vars(args).items() if key != "handler"
    }
    print(
        f"config: {json.dumps(resolved, ensure_ascii=False, sort_keys=True)}",
        file=sys.stderr,
    )


def main(argv: list[str] | None = None) -> int:
    level_name = os.environ.get("DIALECT_FORGE_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    _print_config(args)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, backend.BackendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
