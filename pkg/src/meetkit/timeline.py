"""Interval types and set algebra over speaker timelines.

Times are real-valued seconds. Comparisons use an absolute tolerance of
``TIME_EPS`` (1e-6 s) when deciding whether two boundaries touch: annotation
files carry millisecond precision, so anything closer than a microsecond is
the same instant. Touching segments merge during normalization.

All values are immutable after construction and all operations are pure, so
they are safe to evaluate from multiple workers concurrently.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple, Union

TIME_EPS = 1e-6

RawSegment = Union["Segment", Tuple[float, float]]


@dataclass(frozen=True, order=True)
class Segment:
    """A speech interval ``[start, end)`` in seconds; ``end > start``."""

    start: float
    end: float

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValueError(f"segment bounds must be finite, got ({self.start}, {self.end})")
        if self.start < 0:
            raise ValueError(f"segment start must be non-negative, got {self.start}")
        if self.end <= self.start:
            raise ValueError(f"segment end must exceed start, got ({self.start}, {self.end})")

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True)
class Timeline:
    """A sorted tuple of pairwise-disjoint segments.

    Build instances with :func:`normalize`; the constructor only verifies the
    invariant (sorted by start, consecutive gaps wider than ``TIME_EPS``).
    """

    segments: Tuple[Segment, ...] = ()

    def __post_init__(self):
        for prev, cur in zip(self.segments, self.segments[1:]):
            if cur.start - prev.end <= TIME_EPS:
                raise ValueError(
                    f"timeline segments must be sorted and disjoint: "
                    f"({prev.start}, {prev.end}) then ({cur.start}, {cur.end})"
                )

    def __iter__(self):
        return iter(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __bool__(self) -> bool:
        return bool(self.segments)

    @property
    def duration(self) -> float:
        return sum(seg.duration for seg in self.segments)

    def covers(self, t: float) -> bool:
        """True when instant ``t`` lies inside one of the segments."""
        starts = [seg.start for seg in self.segments]
        idx = bisect_right(starts, t) - 1
        return idx >= 0 and t < self.segments[idx].end


SpeakerTimelineSet = Dict[str, Timeline]


def _as_segment(item: RawSegment, index: int) -> Segment:
    if isinstance(item, Segment):
        return item
    try:
        return Segment(float(item[0]), float(item[1]))
    except ValueError as exc:
        raise ValueError(f"invalid segment at index {index}: {exc}") from None


def normalize(raw_segments: Iterable[RawSegment]) -> Timeline:
    """Sort segments and merge overlapping or touching ones.

    Total covered duration is preserved. Accepts ``Segment`` instances or
    ``(start, end)`` pairs; an invalid segment is rejected with its index.
    """
    segments = [_as_segment(item, i) for i, item in enumerate(raw_segments)]
    if not segments:
        return Timeline()
    segments.sort(key=lambda s: (s.start, s.end))
    merged: List[List[float]] = [[segments[0].start, segments[0].end]]
    for seg in segments[1:]:
        if seg.start - merged[-1][1] <= TIME_EPS:
            merged[-1][1] = max(merged[-1][1], seg.end)
        else:
            merged.append([seg.start, seg.end])
    return Timeline(tuple(Segment(s, e) for s, e in merged))


def duration(t: Timeline) -> float:
    """Total covered time: sum of ``end - start`` over segments."""
    return t.duration


def intersect(a: Timeline, b: Timeline) -> Timeline:
    """Exact interval intersection of two normalized timelines."""
    out: List[Segment] = []
    sa, sb = a.segments, b.segments
    i = j = 0
    while i < len(sa) and j < len(sb):
        lo = max(sa[i].start, sb[j].start)
        hi = min(sa[i].end, sb[j].end)
        if hi - lo > TIME_EPS:
            out.append(Segment(lo, hi))
        if sa[i].end < sb[j].end:
            i += 1
        else:
            j += 1
    return Timeline(tuple(out))


def union(a: Timeline, b: Timeline) -> Timeline:
    """Interval union of two timelines, normalized."""
    return normalize(list(a.segments) + list(b.segments))


def difference(a: Timeline, b: Timeline) -> Timeline:
    """Portions of ``a`` not covered by ``b``."""
    out: List[Segment] = []
    for seg in a:
        cursor = seg.start
        for other in b:
            if other.end <= cursor + TIME_EPS:
                continue
            if other.start >= seg.end - TIME_EPS:
                break
            if other.start - cursor > TIME_EPS:
                out.append(Segment(cursor, other.start))
            cursor = max(cursor, other.end)
            if cursor >= seg.end - TIME_EPS:
                break
        if seg.end - cursor > TIME_EPS:
            out.append(Segment(cursor, seg.end))
    return Timeline(tuple(out))


def iou(a: Timeline, b: Timeline) -> float:
    """Intersection-over-union of total durations, in [0, 1].

    Two empty timelines yield 0.0 rather than an error, so a diarized
    speaker with no usable speech can never win a remapping by default.
    """
    union_duration = union(a, b).duration
    if union_duration <= 0.0:
        return 0.0
    return intersect(a, b).duration / union_duration


def exclusive_regions(tset: SpeakerTimelineSet, speaker_id: str) -> Timeline:
    """Portions of one speaker's timeline overlapped by no other speaker."""
    if speaker_id not in tset:
        raise KeyError(f"unknown speaker_id: {speaker_id!r}")
    others = Timeline()
    for spk, tl in tset.items():
        if spk != speaker_id:
            others = union(others, tl)
    return difference(tset[speaker_id], others)


def concurrency_clips(tset: SpeakerTimelineSet) -> Dict[int, Timeline]:
    """Maximal clips where exactly k speakers are simultaneously active.

    Returns a mapping from concurrency level k >= 1 to the timeline of its
    maximal constant-concurrency clips.
    """
    boundaries: List[float] = []
    for tl in tset.values():
        for seg in tl:
            boundaries.append(seg.start)
            boundaries.append(seg.end)
    boundaries.sort()
    cells: List[float] = []
    for b in boundaries:
        if not cells or b - cells[-1] > TIME_EPS:
            cells.append(b)
    # Count active speakers over each elementary cell, then fuse adjacent
    # cells with equal counts into maximal clips.
    runs: List[Tuple[float, float, int]] = []
    for lo, hi in zip(cells, cells[1:]):
        mid = 0.5 * (lo + hi)
        count = sum(1 for tl in tset.values() if tl.covers(mid))
        if count == 0:
            continue
        if runs and runs[-1][2] == count and lo - runs[-1][1] <= TIME_EPS:
            runs[-1] = (runs[-1][0], hi, count)
        else:
            runs.append((lo, hi, count))
    out: Dict[int, List[Segment]] = {}
    for lo, hi, count in runs:
        out.setdefault(count, []).append(Segment(lo, hi))
    return {k: Timeline(tuple(segs)) for k, segs in sorted(out.items())}


def overlap_histogram(
    tset: SpeakerTimelineSet, bin_width: float, max_clip: float
) -> Dict[int, List[int]]:
    """Histogram, per concurrency level k >= 2, of maximal-clip durations.

    Bin i counts clips with duration in ``[i*bin_width, (i+1)*bin_width)``;
    the last bin is closed at ``max_clip`` and clips longer than ``max_clip``
    are excluded.
    """
    if bin_width <= 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    if max_clip <= 0:
        raise ValueError(f"max_clip must be positive, got {max_clip}")
    nbins = max(1, math.ceil(max_clip / bin_width - TIME_EPS))
    histograms: Dict[int, List[int]] = {}
    for k, clips in concurrency_clips(tset).items():
        if k < 2:
            continue
        counts = [0] * nbins
        for clip in clips:
            d = clip.duration
            if d > max_clip + TIME_EPS:
                continue
            counts[min(int(d / bin_width), nbins - 1)] += 1
        histograms[k] = counts
    return histograms
