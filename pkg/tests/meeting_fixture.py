"""Synthetic oracle meeting used by the CLI and acceptance tests.

Builds one recording from hand-chosen speaker groups whose turns are
staggered by the mixture planner's delay law (each turn starts 0.5 s to the
previous turn's duration after it), then derives every pipeline input from
that construction:

* a crisp VAD probability stream (1 inside groups, 0 outside),
* word and utterance annotation CSVs,
* per-segment oracle embeddings (dominant speaker's center + small noise),
* a reference RTTM of the true speaker timelines,
* reference and hypothesis serialized transcripts, where the hypothesis
  carries the diarizer-space speaker names the pipeline is expected to
  recover, so a perfect run scores 0% word/speaker error and 100% counting
  accuracy.

The expected diarizer names follow first-appearance order of the dominant
speakers along the segment sequence, which the construction controls.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from meetkit import ingest, segmenter, sot
from meetkit.ingest import (
    EmbeddingRecord,
    SotSample,
    UtteranceRecord,
    VadStream,
    WordToken,
    segment_id,
)
from meetkit.timeline import Segment, normalize

RECORDING = "mtg0"
FRAME = 0.05
SPEAKERS = ("alice", "bob", "carol", "dave")

# Group compositions (lead speaker first). Every speaker leads at least
# twice, so every speaker dominates several segments.
GROUPS: Tuple[Tuple[str, ...], ...] = (
    ("alice",),
    ("bob",),
    ("carol",),
    ("dave",),
    ("alice", "bob"),
    ("bob", "carol"),
    ("carol", "dave"),
    ("dave", "alice"),
    ("alice", "bob", "carol"),
    ("bob", "carol", "dave"),
    ("carol",),
    ("dave",),
)
LEAD_DURATION = 5.0
FOLLOWER_DURATION = 1.5
GROUP_GAP = 2.0


@dataclass
class Turn:
    speaker: str
    start: float
    end: float
    words: List[WordToken]


@dataclass
class Meeting:
    turns: List[Turn]
    words: List[WordToken]
    utterances: List[UtteranceRecord]
    vad: VadStream
    segments: List[Segment]
    dominant: List[str]
    sd_name: Dict[str, str]
    references: List[SotSample]
    hypotheses: List[SotSample]
    ref_timelines: Dict[str, object]


def _make_words(speaker: str, start: float, end: float, base_index: int) -> List[WordToken]:
    n = max(2, int((end - start) / 0.5))
    step = (end - start) / n
    return [
        WordToken(
            RECORDING,
            speaker,
            round(start + k * step, 3),
            round(start + (k + 1) * step, 3),
            f"{speaker}.w{base_index + k}",
        )
        for k in range(n)
    ]


def build_meeting(seed: int = 7) -> Meeting:
    rng = np.random.default_rng(seed)
    turns: List[Turn] = []
    words: List[WordToken] = []
    utterances: List[UtteranceRecord] = []
    cursor = 1.0
    word_counter = 0
    for group in GROUPS:
        durations = [LEAD_DURATION] + [FOLLOWER_DURATION] * (len(group) - 1)
        starts = [cursor]
        for prev_duration in durations[:-1]:
            starts.append(starts[-1] + float(rng.uniform(0.5, prev_duration)))
        group_end = 0.0
        for speaker, start, duration in zip(group, starts, durations):
            start = round(start, 3)
            end = round(start + duration, 3)
            turn_words = _make_words(speaker, start, end, word_counter)
            word_counter += len(turn_words)
            turns.append(Turn(speaker, start, end, turn_words))
            words.extend(turn_words)
            utterances.append(
                UtteranceRecord(
                    RECORDING, speaker, start, end, " ".join(w.text for w in turn_words)
                )
            )
            group_end = max(group_end, end)
        cursor = group_end + GROUP_GAP
    words.sort(key=lambda w: (w.start, w.end))
    utterances.sort(key=lambda u: (u.start, u.end))

    total = cursor + 1.0
    n_frames = int(round(total / FRAME))
    probs = np.zeros(n_frames)
    for turn in turns:
        lo = int(turn.start / FRAME)
        hi = int(np.ceil(turn.end / FRAME))
        probs[lo:hi] = 1.0
    vad = VadStream(RECORDING, FRAME, tuple(float(p) for p in probs))

    merged = segmenter.merge_by_silence(
        segmenter.binarize_vad(vad, onset=0.5, offset=0.35), threshold=0.5
    )
    segments = list(merged)
    assert len(segments) == len(GROUPS), (len(segments), len(GROUPS))

    dominant: List[str] = []
    for seg in segments:
        speech: Dict[str, float] = {}
        for turn in turns:
            lo, hi = max(turn.start, seg.start), min(turn.end, seg.end)
            if hi > lo:
                speech[turn.speaker] = speech.get(turn.speaker, 0.0) + (hi - lo)
        dominant.append(max(speech, key=lambda s: (speech[s], s)))
    sd_name: Dict[str, str] = {}
    for speaker in dominant:
        if speaker not in sd_name:
            sd_name[speaker] = f"spk{len(sd_name):02d}"

    references = [
        sot.build_reference(RECORDING, seg, words, utterances) for seg in segments
    ]
    hypotheses = [
        SotSample(
            r.recording_id,
            r.segment,
            r.tokens,
            tuple(sd_name[label] for label in r.speakers),
        )
        for r in references
    ]
    per_speaker: Dict[str, List[Tuple[float, float]]] = {}
    for turn in turns:
        per_speaker.setdefault(turn.speaker, []).append((turn.start, turn.end))
    ref_timelines = {spk: normalize(pairs) for spk, pairs in per_speaker.items()}
    return Meeting(
        turns,
        words,
        utterances,
        vad,
        segments,
        dominant,
        sd_name,
        references,
        hypotheses,
        ref_timelines,
    )


def write_meeting_inputs(meeting: Meeting, directory: Path, seed: int = 7) -> Dict[str, Path]:
    """Persist every pipeline input file; returns the path map."""
    rng = np.random.default_rng(seed + 1)
    basis, _ = np.linalg.qr(rng.normal(size=(192, len(SPEAKERS))))
    centers = {spk: basis[:, i] for i, spk in enumerate(SPEAKERS)}
    records = []
    for seg, speaker in zip(meeting.segments, meeting.dominant):
        vector = centers[speaker] + 0.02 * rng.normal(size=192)
        records.append(EmbeddingRecord(segment_id(RECORDING, seg), tuple(vector.tolist())))

    paths = {
        "vad": directory / "vad.tsv",
        "embeddings": directory / "embeddings.tsv",
        "ref_rttm": directory / "ref.rttm",
        "ref_sot": directory / "ref.sot",
        "hyp_sot": directory / "hyp.sot",
        "words": directory / "words.csv",
        "utterances": directory / "utterances.csv",
    }
    ingest.write_vad_stream([meeting.vad], paths["vad"])
    ingest.write_embeddings(records, paths["embeddings"])
    ingest.write_rttm({RECORDING: meeting.ref_timelines}, paths["ref_rttm"])
    ingest.write_sot(meeting.references, paths["ref_sot"])
    ingest.write_sot(meeting.hypotheses, paths["hyp_sot"])
    ingest.write_words(meeting.words, paths["words"])
    ingest.write_utterances(meeting.utterances, paths["utterances"])
    return paths


def write_config(paths: Dict[str, Path], out_dir: Path, config_path: Path, seed: int = 7) -> Path:
    config_path.write_text(
        "\n".join(
            [
                "[paths]",
                f"vad = {paths['vad']}",
                f"embeddings = {paths['embeddings']}",
                f"ref_rttm = {paths['ref_rttm']}",
                f"ref_sot = {paths['ref_sot']}",
                f"hyp_sot = {paths['hyp_sot']}",
                f"out_dir = {out_dir}",
                "[segmentation]",
                "method = vad_merge",
                "silence_threshold = 0.5",
                "onset = 0.5",
                "offset = 0.35",
                "[diarization]",
                "max_speakers = 8",
                "affinity_percentile = 80",
                "[templates]",
                "min_len = 2",
                "max_len = 50",
                "selection = all",
                "allow_overlap = false",
                "[remap]",
                "mode = literal",
                "[run]",
                f"seed = {seed}",
                "workers = 1",
                "",
            ]
        )
    )
    return config_path
