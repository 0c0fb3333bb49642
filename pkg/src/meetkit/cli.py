"""Command-line interface.

Subcommands: segment, diarize, templates, remap, score, simulate, pipeline,
sweep. Exit codes: 0 success, 2 configuration error, 3 data error. The
``MEETKIT_WORKERS`` environment variable sets the default per-recording
worker count.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import ingest, pipeline, simulate
from .config import RunConfig, apply_overrides, load_config, validate_config
from .diarizer import DiarizationConfig, cluster, to_timeline_set
from .errors import ConfigError, DataError, MeetkitError
from .remap import remap_ids, write_mapping
from .scoring import render_report, score_report
from .templates import CandidateFilter, build_all_templates


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("MEETKIT_WORKERS", "1")))
    except ValueError:
        return 1


def _parse_filter_len(raw: str):
    lo, sep, hi = raw.partition(":")
    if not sep:
        raise ConfigError(f"--filter-len must look like MIN:MAX, got {raw!r}")
    return float(lo), float(hi)


def _add_binarize_flags(sub):
    sub.add_argument("--onset", type=float, default=0.5)
    sub.add_argument("--offset", type=float, default=0.35)
    sub.add_argument("--min-speech", type=float, default=0.0)
    sub.add_argument("--min-silence", type=float, default=0.0)


_METHOD_ALIASES = {"fixed": "fixed_size", "gt": "ground_truth", "vad": "vad_merge"}


def cmd_segment(args) -> int:
    config = RunConfig(
        vad=args.vad,
        words=args.words,
        utterances=args.utterances,
        method=_METHOD_ALIASES[args.method],
        silence_threshold=args.silence_threshold,
        onset=args.onset,
        offset=args.offset,
        min_speech=args.min_speech,
        min_silence=args.min_silence,
        chunk=args.chunk,
        hop=args.hop,
        max_group=args.max_group,
        overlap_margin=args.overlap_margin,
        workers=args.workers,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ingest.write_segment_list(pipeline.compute_segments(config), out)
    return 0


def cmd_diarize(args) -> int:
    segments = ingest.read_segment_list(args.segments)
    lookup = {r.id: r for r in ingest.read_embeddings(args.embeddings)}
    try:
        cfg = DiarizationConfig(
            max_speakers=args.max_speakers,
            fixed_k=args.k,
            affinity_percentile=args.percentile,
            kmeans_restarts=args.restarts,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    sets = {}
    for rec in sorted(segments):
        vectors = []
        for seg in segments[rec]:
            key = ingest.segment_id(rec, seg)
            if key not in lookup:
                raise DataError(f"missing embedding for segment {key!r}")
            vectors.append(lookup[key].vector)
        sets[rec] = to_timeline_set(cluster(vectors, cfg), segments[rec], rec)
    ingest.write_rttm(sets, args.out)
    return 0


def cmd_templates(args) -> int:
    min_len, max_len = _parse_filter_len(args.filter_len)
    try:
        filt = CandidateFilter(
            allow_overlap=args.allow_overlap,
            min_len=min_len,
            max_len=max_len,
            n_longest=None if args.selection == "all" else int(args.selection),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    sets = ingest.read_rttm(args.sd)
    lookup = {r.id: r for r in ingest.read_embeddings(args.embeddings)}
    records = []
    support = ["recording_id\tspeaker_id\tnum_segments\ttotal_duration"]
    for rec in sorted(sets):
        for template in build_all_templates(sets[rec], lookup, filt, rec):
            records.append(ingest.EmbeddingRecord(f"{rec}:{template.speaker_id}", template.vector))
            support.append(
                f"{rec}\t{template.speaker_id}\t{template.support.num_segments}"
                f"\t{template.support.total_duration:.3f}"
            )
    ingest.write_embeddings(records, args.out)
    with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(support) + "\n")
    return 0


def cmd_remap(args) -> int:
    sd_sets = ingest.read_rttm(args.sd)
    ref_sets = ingest.read_rttm(args.ref)
    out = Path(args.out)
    if len(sd_sets) > 1:
        out.mkdir(parents=True, exist_ok=True)
        for rec in sorted(sd_sets):
            if rec not in ref_sets:
                raise DataError(f"recording {rec!r} missing from the reference RTTM")
            write_mapping(remap_ids(sd_sets[rec], ref_sets[rec], args.mode), out / f"{rec}.tsv")
    else:
        (rec,) = sd_sets
        if rec not in ref_sets:
            raise DataError(f"recording {rec!r} missing from the reference RTTM")
        write_mapping(remap_ids(sd_sets[rec], ref_sets[rec], args.mode), out)
    return 0


def cmd_score(args) -> int:
    refs, hyps = pipeline.paired_sot(args.ref, args.hyp)
    if args.mapping is not None:
        mappings = pipeline.load_mappings(Path(args.mapping))
        hyps = pipeline.apply_mappings_by_recording(hyps, mappings)
    baseline = None
    if args.baseline is not None:
        _, baseline = pipeline.paired_sot(args.ref, args.baseline)
        if args.mapping is not None:
            baseline = pipeline.apply_mappings_by_recording(baseline, mappings)
    by_speakers = None
    if args.by_speakers:
        by_speakers = [int(v) for v in args.by_speakers.split(",")]
    report = score_report(refs, hyps, baseline_hyps=baseline, by_speakers=by_speakers)
    text = render_report(report)
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_simulate(args) -> int:
    simulate.simulate_corpus(
        args.catalog,
        args.out,
        count=args.count,
        seed=args.seed,
        sample_rate=args.sample_rate,
        max_order=args.max_order,
    )
    return 0


def cmd_pipeline(args) -> int:
    config = load_config(args.config)
    apply_overrides(config, args.set or [])
    if args.out is not None:
        config.out_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    if args.workers is not None:
        config.workers = args.workers
    elif "MEETKIT_WORKERS" in os.environ:
        config.workers = _default_workers()
    findings = validate_config(config)
    if findings:
        raise ConfigError("; ".join(findings))
    pipeline.pipeline_run(config, resume=not args.no_resume)
    return 0


def cmd_validate(args) -> int:
    config = load_config(args.config)
    apply_overrides(config, args.set or [])
    findings = validate_config(config)
    for finding in findings:
        print(finding)
    return 2 if findings else 0


def cmd_sweep(args) -> int:
    config = RunConfig(
        vad=args.vad,
        onset=args.onset,
        offset=args.offset,
        min_speech=args.min_speech,
        min_silence=args.min_silence,
    )
    thresholds = [float(v) for v in args.thresholds.split(",")]
    rows = pipeline.threshold_sweep(config, thresholds)
    text = pipeline.render_sweep(rows)
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meetkit",
        description="Batch tooling for multi-speaker meeting transcription pipelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment recordings into speech chunks")
    p.add_argument("--method", choices=sorted(_METHOD_ALIASES), required=True)
    p.add_argument("--vad", help="VAD stream file (method vad)")
    p.add_argument("--words", help="word annotations CSV (method fixed)")
    p.add_argument("--utterances", help="utterance annotations CSV (methods fixed, gt)")
    p.add_argument("--silence-threshold", type=float, default=0.5)
    p.add_argument("--chunk", type=float, default=5.0)
    p.add_argument("--hop", type=float, default=2.0)
    p.add_argument("--max-group", type=float, default=100.0)
    p.add_argument("--overlap-margin", type=float, default=2.0)
    _add_binarize_flags(p)
    p.add_argument("--workers", type=int, default=_default_workers())
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_segment)

    p = sub.add_parser("diarize", help="cluster segment embeddings into speakers")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--segments", required=True)
    p.add_argument("--max-speakers", type=int, default=8)
    p.add_argument("--k", type=int, default=None, help="fixed speaker count")
    p.add_argument("--percentile", type=float, default=40.0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_diarize)

    p = sub.add_parser("templates", help="extract speaker embedding templates")
    p.add_argument("--sd", required=True, help="diarization RTTM")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--filter-len", default="2:5", help="length interval MIN:MAX seconds")
    p.add_argument("--selection", default="all", help="'all' or an integer n (n longest)")
    overlap = p.add_mutually_exclusive_group()
    overlap.add_argument("--allow-overlap", dest="allow_overlap", action="store_true")
    overlap.add_argument("--no-overlap", dest="allow_overlap", action="store_false")
    p.set_defaults(allow_overlap=False)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(fn=cmd_templates)

    p = sub.add_parser("remap", help="remap diarized speaker ids to reference ids")
    p.add_argument("--sd", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--mode", choices=("literal", "one_to_one"), default="literal")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_remap)

    p = sub.add_parser("score", help="score hypothesis against reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--mapping", help="mapping file or per-recording directory")
    p.add_argument("--baseline", help="baseline hypothesis for significance tests")
    p.add_argument("--by-speakers", help="comma-separated true speaker counts to report")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("simulate", help="generate far-field multi-speaker mixtures")
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--max-order", type=int, default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("pipeline", help="run segment/diarize/templates/remap/score")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-resume", action="store_true")
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("validate", help="check a run configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("sweep", help="silence-threshold sweep statistics")
    p.add_argument("--vad", required=True)
    p.add_argument("--thresholds", default="0.1,0.3,0.5,0.7,0.9")
    _add_binarize_flags(p)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_sweep)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc.cause, ConfigError) else 3
    except (MeetkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
