"""Segmentation strategies for long meeting recordings.

Three methods: fixed-size chunking with overlap/word boundary adjustment,
utterance groups from ground-truth annotations, and VAD-stream binarization
followed by silence-threshold merging. All functions are pure; recordings
are independent units of parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence

from .errors import DataError
from .ingest import UtteranceRecord, VadStream, WordToken
from .timeline import TIME_EPS, Segment, Timeline, normalize

_METHODS = ("fixed_size", "ground_truth", "vad_merge")


@dataclass(frozen=True)
class SegmentationConfig:
    method: str = "vad_merge"
    chunk: float = 5.0
    hop: float = 2.0
    silence_threshold: float = 0.5
    max_group: float = 100.0
    overlap_margin: float = 2.0

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}, got {self.method!r}")
        if not self.hop > 0:
            raise ValueError(f"hop must be positive, got {self.hop}")
        if self.chunk < self.hop:
            raise ValueError(f"chunk ({self.chunk}) must be >= hop ({self.hop})")
        if not self.silence_threshold > 0:
            raise ValueError(f"silence_threshold must be positive, got {self.silence_threshold}")
        if not self.max_group > 0:
            raise ValueError(f"max_group must be positive, got {self.max_group}")


@dataclass(frozen=True)
class SegmentStats:
    count: int
    mean_duration: float


def _fuse_gaps(segments: Sequence[Segment], threshold: float) -> List[Segment]:
    """Fuse consecutive segments whose gap is strictly below ``threshold``."""
    out: List[Segment] = []
    for seg in segments:
        if out and threshold - (seg.start - out[-1].end) > TIME_EPS:
            out[-1] = Segment(out[-1].start, max(out[-1].end, seg.end))
        else:
            out.append(seg)
    return out


def binarize_vad(
    stream: VadStream,
    onset: float,
    offset: float,
    min_speech: float = 0.0,
    min_silence: float = 0.0,
) -> Timeline:
    """Hysteresis thresholding of a VAD probability stream.

    Speech starts at the first frame with p >= onset and ends before the
    first subsequent frame with p < offset (that frame is no longer speech).
    Speech runs shorter than ``min_speech`` are dropped, then silence gaps
    shorter than ``min_silence`` are filled.
    """
    if not 0.0 <= offset <= onset <= 1.0:
        raise ValueError(f"need 0 <= offset <= onset <= 1, got onset={onset}, offset={offset}")
    if not stream.probabilities:
        raise DataError(f"VAD stream {stream.recording_id!r} is empty")
    period = stream.frame_period
    runs: List[Segment] = []
    start_frame = None
    for i, p in enumerate(stream.probabilities):
        if start_frame is None:
            if p >= onset:
                start_frame = i
        elif p < offset:
            runs.append(Segment(start_frame * period, i * period))
            start_frame = None
    if start_frame is not None:
        runs.append(Segment(start_frame * period, len(stream.probabilities) * period))
    kept = [seg for seg in runs if seg.duration >= min_speech - TIME_EPS]
    return normalize(_fuse_gaps(kept, min_silence))


def merge_by_silence(segments: Timeline, threshold: float) -> Timeline:
    """Fuse adjacent segments separated by silence strictly shorter than
    ``threshold`` seconds."""
    return normalize(_fuse_gaps(list(segments), threshold))


def _adjust_boundary(
    b: float,
    is_start: bool,
    overlap_regions: Timeline,
    words: Sequence[WordToken],
    span: Segment,
    margin: float,
) -> float:
    # Per pass: move out of an overlap region first (starts earlier, ends
    # later, clipped to the span), then snap out of a word. Starts only ever
    # move earlier and ends only later, so iterating to a fixed point
    # terminates and guarantees the final boundary sits strictly inside no
    # overlap region or word, even when words overlap each other.
    for _ in range(len(overlap_regions) + len(words) + 2):
        moved = b
        for region in overlap_regions:
            if region.start + TIME_EPS < moved < region.end - TIME_EPS:
                moved = region.start - margin if is_start else region.end + margin
                moved = min(max(moved, span.start), span.end)
                break
        for w in words:
            if w.start + TIME_EPS < moved < w.end - TIME_EPS:
                moved = w.start if is_start else w.end
                break
        if moved == b:
            return b
        b = moved
    return b


def fixed_size_chunks(
    recording_span: Segment,
    overlap_regions: Timeline,
    words: Sequence[WordToken],
    cfg: SegmentationConfig,
) -> List[Segment]:
    """Chunk a recording with fixed chunk/hop sizes, then adjust boundaries.

    A boundary inside an overlap region is moved ``overlap_margin`` outside
    it (starts earlier, ends later, clipped to the span); a boundary still
    strictly inside a word is then snapped to that word's start (for chunk
    starts) or end (for chunk ends). Degenerate and duplicate chunks are
    dropped.
    """
    raw: List[Segment] = []
    k = 0
    while True:
        start = recording_span.start + k * cfg.hop
        if start >= recording_span.end - TIME_EPS:
            break
        raw.append(Segment(start, min(start + cfg.chunk, recording_span.end)))
        k += 1
    out: List[Segment] = []
    seen = set()
    for seg in raw:
        start = _adjust_boundary(
            seg.start, True, overlap_regions, words, recording_span, cfg.overlap_margin
        )
        end = _adjust_boundary(
            seg.end, False, overlap_regions, words, recording_span, cfg.overlap_margin
        )
        if end - start <= TIME_EPS:
            continue
        key = (round(start, 6), round(end, 6))
        if key in seen:
            continue
        seen.add(key)
        out.append(Segment(start, end))
    return out


def utterance_groups(
    utterances: Iterable[UtteranceRecord], cfg: SegmentationConfig
) -> List[Segment]:
    """Merge all utterance intervals across speakers into silence-bounded
    groups; groups longer than ``max_group`` are discarded."""
    merged = normalize([(u.start, u.end) for u in utterances])
    return [seg for seg in merged if seg.duration <= cfg.max_group + TIME_EPS]


def segment_stats(segments: Iterable[Segment]) -> SegmentStats:
    """Count and mean duration of a segment list; empty input is an error."""
    segs = list(segments)
    if not segs:
        raise DataError("cannot compute statistics of an empty segment list")
    return SegmentStats(len(segs), sum(s.duration for s in segs) / len(segs))
