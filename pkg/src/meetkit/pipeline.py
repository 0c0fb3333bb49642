"""End-to-end orchestration: segment -> diarize -> templates -> remap -> score.

Every stage persists its output as plain files under the run's output
directory, and a manifest records the configuration hash plus a checksum per
output file. A stage is skipped on re-run iff the stored hash matches the
current configuration and all of its outputs are present with matching
checksums, which makes stages individually resumable; identical config and
seed therefore produce byte-identical manifests.

Ground-truth speaker segments and reference transcripts are read only by the
remap and score stages; the recognition path (segment, diarize, templates)
sees nothing but the VAD stream and the embedding files.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import ingest, segmenter
from .config import RunConfig, validate_config
from .diarizer import cluster, to_timeline_set
from .errors import ConfigError, DataError, MeetkitError
from .remap import IdMapping, apply_mapping, read_mapping, remap_ids, write_mapping
from .scoring import render_report, score_report
from .templates import build_all_templates
from .timeline import Segment, Timeline, concurrency_clips, normalize, union

STAGE_ORDER = ("segment", "diarize", "templates", "remap", "score")


class StageError(MeetkitError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage}: {cause}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def map_recordings(fn: Callable, items: Dict[str, object], workers: int) -> Dict[str, object]:
    """Apply ``fn(rec, payload)`` per recording; results merge in id order."""
    recs = sorted(items)
    if workers <= 1 or len(recs) <= 1:
        return {rec: fn((rec, items[rec])) for rec in recs}
    with ProcessPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(fn, [(rec, items[rec]) for rec in recs]))
    return dict(zip(recs, results))


# ---------------------------------------------------------------------------
# per-recording stage workers (module level so process pools can pickle them)

def _segment_one(config: RunConfig, item) -> List[Segment]:
    rec, payload = item
    cfg = config.segmentation_config()
    if config.method == "vad_merge":
        raw = segmenter.binarize_vad(
            payload, config.onset, config.offset, config.min_speech, config.min_silence
        )
        return list(segmenter.merge_by_silence(raw, config.silence_threshold))
    if config.method == "ground_truth":
        return segmenter.utterance_groups(payload, cfg)
    words, utterances = payload
    if not utterances:
        return []
    span = Segment(min(u.start for u in utterances), max(u.end for u in utterances))
    per_speaker: Dict[str, List[Tuple[float, float]]] = {}
    for u in utterances:
        per_speaker.setdefault(u.speaker_id, []).append((u.start, u.end))
    tset = {spk: normalize(pairs) for spk, pairs in per_speaker.items()}
    overlap = Timeline()
    for level, clips in concurrency_clips(tset).items():
        if level >= 2:
            overlap = union(overlap, clips)
    return segmenter.fixed_size_chunks(span, overlap, words, cfg)


def _diarize_one(config: RunConfig, item):
    rec, payload = item
    segments, vectors = payload
    result = cluster(vectors, config.diarization_config())
    return to_timeline_set(result, segments, rec)


def compute_segments(config: RunConfig) -> Dict[str, List[Segment]]:
    """Run the configured segmentation method over every recording."""
    if config.method == "vad_merge":
        if config.vad is None:
            raise DataError("segmentation method vad_merge needs paths.vad")
        items = {s.recording_id: s for s in ingest.read_vad_stream(config.vad)}
    elif config.method == "ground_truth":
        if config.utterances is None:
            raise DataError("segmentation method ground_truth needs paths.utterances")
        items = {}
        for u in ingest.read_utterances(config.utterances):
            items.setdefault(u.recording_id, []).append(u)
    else:
        if config.words is None or config.utterances is None:
            raise DataError("segmentation method fixed_size needs paths.words and paths.utterances")
        items = {}
        for u in ingest.read_utterances(config.utterances):
            items.setdefault(u.recording_id, ([], []))[1].append(u)
        for w in ingest.read_words(config.words):
            items.setdefault(w.recording_id, ([], []))[0].append(w)
    return map_recordings(partial(_segment_one, config), items, config.workers)


def stage_segment(config: RunConfig, out_dir: Path) -> List[str]:
    ingest.write_segment_list(compute_segments(config), out_dir / "segments.rttm")
    return ["segments.rttm"]


def _load_segment_embeddings(config: RunConfig, segments_path: Path):
    segments = ingest.read_segment_list(segments_path)
    lookup = {r.id: r for r in ingest.read_embeddings(config.embeddings)}
    items = {}
    for rec, segs in segments.items():
        vectors = []
        for seg in segs:
            key = ingest.segment_id(rec, seg)
            if key not in lookup:
                raise DataError(f"missing embedding for segment {key!r}")
            vectors.append(lookup[key].vector)
        items[rec] = (segs, vectors)
    return items, lookup


def stage_diarize(config: RunConfig, out_dir: Path) -> List[str]:
    if config.segments is not None:
        segments_path = Path(config.segments)
    else:
        segments_path = out_dir / "segments.rttm"
    items, _ = _load_segment_embeddings(config, segments_path)
    sets = map_recordings(partial(_diarize_one, config), items, config.workers)
    ingest.write_rttm(sets, out_dir / "sd.rttm")
    return ["sd.rttm"]


def stage_templates(config: RunConfig, out_dir: Path) -> List[str]:
    sets = ingest.read_rttm(out_dir / "sd.rttm")
    lookup = {r.id: r for r in ingest.read_embeddings(config.embeddings)}
    filt = config.candidate_filter()
    records = []
    support_lines = []
    for rec in sorted(sets):
        for template in build_all_templates(sets[rec], lookup, filt, rec):
            records.append(
                ingest.EmbeddingRecord(f"{rec}:{template.speaker_id}", template.vector)
            )
            support_lines.append(
                f"{rec}\t{template.speaker_id}\t{template.support.num_segments}"
                f"\t{template.support.total_duration:.3f}"
            )
    ingest.write_embeddings(records, out_dir / "templates.tsv")
    with open(out_dir / "template_support.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("recording_id\tspeaker_id\tnum_segments\ttotal_duration\n")
        for line in support_lines:
            fh.write(line + "\n")
    return ["templates.tsv", "template_support.txt"]


def stage_remap(config: RunConfig, out_dir: Path) -> List[str]:
    sd_sets = ingest.read_rttm(out_dir / "sd.rttm")
    ref_sets = ingest.read_rttm(config.ref_rttm)
    mapping_dir = out_dir / "mapping"
    mapping_dir.mkdir(exist_ok=True)
    outputs = []
    for rec in sorted(sd_sets):
        if rec not in ref_sets:
            raise DataError(f"recording {rec!r} missing from the reference RTTM")
        mapping = remap_ids(sd_sets[rec], ref_sets[rec], config.remap_mode)
        write_mapping(mapping, mapping_dir / f"{rec}.tsv")
        outputs.append(f"mapping/{rec}.tsv")
    return outputs


def load_mappings(path: Path) -> Dict[Optional[str], IdMapping]:
    """Load a single mapping file (key None) or a per-recording directory."""
    path = Path(path)
    if path.is_dir():
        return {p.stem: read_mapping(p) for p in sorted(path.glob("*.tsv"))}
    return {None: read_mapping(path)}


def apply_mappings_by_recording(samples, mappings: Dict[Optional[str], IdMapping]):
    mapped = []
    for sample in samples:
        mapping = mappings.get(sample.recording_id, mappings.get(None))
        if mapping is None:
            raise DataError(f"no id mapping for recording {sample.recording_id!r}")
        mapped.append(apply_mapping(sample, mapping))
    return mapped


def paired_sot(ref_path, hyp_path):
    refs = sorted(
        ingest.read_sot(ref_path), key=lambda s: ingest.segment_id(s.recording_id, s.segment)
    )
    hyps = sorted(
        ingest.read_sot(hyp_path), key=lambda s: ingest.segment_id(s.recording_id, s.segment)
    )
    return refs, hyps


def stage_score(config: RunConfig, out_dir: Path) -> List[str]:
    refs, hyps = paired_sot(config.ref_sot, config.hyp_sot)
    # Without a remap stage (no reference RTTM) hypotheses are scored in
    # their own label space, i.e. they must already carry reference ids.
    mappings = load_mappings(out_dir / "mapping") if (out_dir / "mapping").is_dir() else None
    if mappings is not None:
        hyps = apply_mappings_by_recording(hyps, mappings)
    baseline = None
    if config.baseline_sot is not None:
        _, baseline = paired_sot(config.ref_sot, config.baseline_sot)
        if mappings is not None:
            baseline = apply_mappings_by_recording(baseline, mappings)
    report = score_report(refs, hyps, baseline_hyps=baseline)
    with open(out_dir / "report.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_report(report))
    return ["report.txt"]


_STAGES = {
    "segment": stage_segment,
    "diarize": stage_diarize,
    "templates": stage_templates,
    "remap": stage_remap,
    "score": stage_score,
}


def _stage_enabled(name: str, config: RunConfig) -> bool:
    if name in ("segment", "diarize", "templates"):
        return True
    if name == "remap":
        return config.ref_rttm is not None
    return config.ref_sot is not None and config.hyp_sot is not None


def pipeline_run(config: RunConfig, resume: bool = True) -> Dict:
    """Execute the pipeline; return the manifest (also persisted as JSON).

    A stage failure halts the run with the stage named; artifacts of earlier
    stages are retained.
    """
    findings = validate_config(config)
    if findings:
        raise ConfigError("; ".join(findings))
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.json"
    config_hash = config.config_hash()
    previous = None
    if resume and manifest_path.exists():
        stored = json.loads(manifest_path.read_text(encoding="utf-8"))
        if stored.get("config_hash") == config_hash:
            previous = stored
    manifest = {"config_hash": config_hash, "stages": {}}

    def flush():
        manifest_path.write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    for name in STAGE_ORDER:
        if not _stage_enabled(name, config):
            continue
        if previous is not None and name in previous.get("stages", {}):
            stored_outputs = previous["stages"][name]
            if all(
                (out_dir / rel).exists() and _sha256(out_dir / rel) == digest
                for rel, digest in stored_outputs.items()
            ):
                manifest["stages"][name] = stored_outputs
                continue
        try:
            outputs = _STAGES[name](config, out_dir)
        except MeetkitError as exc:
            flush()
            raise StageError(name, exc) from exc
        manifest["stages"][name] = {rel: _sha256(out_dir / rel) for rel in outputs}
    flush()
    return manifest


def threshold_sweep(
    config: RunConfig, thresholds: Sequence[float]
) -> List[Tuple[float, int, float]]:
    """Segment-count and mean-duration statistics per silence threshold."""
    if config.vad is None:
        raise DataError("sweep needs paths.vad")
    streams = ingest.read_vad_stream(config.vad)
    rows = []
    for threshold in thresholds:
        all_segments: List[Segment] = []
        for stream in streams:
            raw = segmenter.binarize_vad(
                stream, config.onset, config.offset, config.min_speech, config.min_silence
            )
            all_segments.extend(segmenter.merge_by_silence(raw, threshold))
        stats = segmenter.segment_stats(all_segments)
        rows.append((threshold, stats.count, stats.mean_duration))
    return rows


def render_sweep(rows: Sequence[Tuple[float, int, float]]) -> str:
    lines = ["sil_thresh\tn_segments\tmean_duration"]
    for threshold, count, mean in rows:
        lines.append(f"{threshold:.3f}\t{count}\t{mean:.3f}")
    return "\n".join(lines) + "\n"
