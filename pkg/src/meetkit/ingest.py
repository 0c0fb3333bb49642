"""Readers and writers for every external artifact the pipeline touches.

Formats (all UTF-8, LF line endings, '.' decimal separator):

* RTTM — the diarization interchange. Field layout per line:
  ``SPEAKER <recording> <chan> <tbeg> <tdur> <ortho> <stype> <name> <conf> <slat>``.
  Only ``SPEAKER`` records and ``;;`` comments are accepted.
* Word / utterance annotations — header-bearing CSV with columns
  ``recording_id,speaker_id,start,end,text``.
* Embeddings — one record per line: id, then D decimal floats, tab-separated.
* VAD streams — one recording per line: id, frame period, then per-frame
  speech probabilities, tab-separated.
* SOT records — line-delimited ``key=value`` fields (tab-separated):
  ``recording_id, start, end, tokens, speakers`` with space-separated token
  and speaker lists.

Writers serialize times with 3 decimals and vector components with 8
significant digits; a write/read cycle is lossless at that precision.
Readers reject malformed input rather than repairing it, and errors carry
file and line. Readers are pure given file bytes; writers require exclusive
access to their output path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

from .errors import FormatError
from .timeline import Segment, SpeakerTimelineSet, normalize

PathLike = Union[str, Path]

_ANNOTATION_COLUMNS = ["recording_id", "speaker_id", "start", "end", "text"]


@dataclass(frozen=True, order=True)
class WordToken:
    """One word with boundaries, from the word-level annotation file."""

    recording_id: str
    speaker_id: str
    start: float
    end: float
    text: str

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"word end must exceed start: {self}")
        if not self.text or any(c.isspace() for c in self.text):
            raise ValueError(f"word text must be non-empty without whitespace: {self.text!r}")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True, order=True)
class UtteranceRecord:
    """One speaker turn with boundaries and transcript."""

    recording_id: str
    speaker_id: str
    start: float
    end: float
    transcript: str

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"utterance end must exceed start: {self}")


@dataclass(frozen=True)
class VadStream:
    """Per-frame speech probabilities for one recording."""

    recording_id: str
    frame_period: float
    probabilities: Tuple[float, ...]

    def __post_init__(self):
        if self.frame_period <= 0:
            raise ValueError(f"frame_period must be positive, got {self.frame_period}")
        for i, p in enumerate(self.probabilities):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability out of [0,1] at frame {i}: {p}")


@dataclass(frozen=True)
class EmbeddingRecord:
    """A fixed-dimension real vector keyed by an id string."""

    id: str
    vector: Tuple[float, ...]

    def __post_init__(self):
        if len(self.vector) == 0:
            raise ValueError(f"embedding {self.id!r} has an empty vector")


@dataclass(frozen=True)
class SotSample:
    """A segment with its serialized token sequence and per-token speakers.

    Tokens may include the literal speaker-change marker ``<sc>``; the
    speaker attached to an ``<sc>`` token is the following speaker.
    """

    recording_id: str
    segment: Segment
    tokens: Tuple[str, ...]
    speakers: Tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.speakers):
            raise ValueError(
                f"{self.recording_id}: {len(self.tokens)} tokens vs "
                f"{len(self.speakers)} speakers"
            )


def segment_id(recording_id: str, segment: Segment) -> str:
    """Deterministic join key between a segment and its embedding record:
    recording id plus millisecond-precision boundaries."""
    return (
        f"{recording_id}-{int(round(segment.start * 1000)):08d}"
        f"-{int(round(segment.end * 1000)):08d}"
    )


def _fmt_time(t: float) -> str:
    return f"{t:.3f}"


def _fmt_float(x: float) -> str:
    return f"{x:.8g}"


def _parse_float(raw: str, path: PathLike, line: int, what: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise FormatError(path, line, f"unparsable {what}: {raw!r}") from None


# ---------------------------------------------------------------------------
# RTTM

def read_rttm(path: PathLike) -> Dict[str, SpeakerTimelineSet]:
    """Parse an RTTM file into per-recording speaker timeline sets.

    Segments are normalized per speaker, so overlapping entries for the same
    speaker merge.
    """
    raw: Dict[str, Dict[str, List[Segment]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith(";;"):
                continue
            fields = line.split()
            if len(fields) != 10:
                raise FormatError(path, lineno, f"expected 10 fields, got {len(fields)}")
            if fields[0] != "SPEAKER":
                raise FormatError(path, lineno, f"unsupported record type {fields[0]!r}")
            rec, name = fields[1], fields[7]
            tbeg = _parse_float(fields[3], path, lineno, "tbeg")
            tdur = _parse_float(fields[4], path, lineno, "tdur")
            if tdur <= 0:
                raise FormatError(path, lineno, f"non-positive duration {tdur}")
            raw.setdefault(rec, {}).setdefault(name, []).append(Segment(tbeg, tbeg + tdur))
    return {
        rec: {spk: normalize(segs) for spk, segs in speakers.items()}
        for rec, speakers in raw.items()
    }


def write_rttm(sets: Mapping[str, SpeakerTimelineSet], path: PathLike) -> None:
    """Inverse of :func:`read_rttm`; round-trip identity on normalized sets."""
    rows = []
    for rec in sorted(sets):
        for spk, tl in sets[rec].items():
            for seg in tl:
                rows.append((rec, seg.start, seg.end, spk))
    rows.sort(key=lambda r: (r[0], r[1], r[3]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec, start, end, spk in rows:
            fh.write(
                f"SPEAKER {rec} 1 {_fmt_time(start)} {_fmt_time(end - start)} "
                f"<NA> <NA> {spk} <NA> <NA>\n"
            )


def read_segment_list(path: PathLike) -> Dict[str, List[Segment]]:
    """Read a plain segment list (RTTM lines, typically with name ``<NA>``).

    Unlike :func:`read_rttm` this keeps segments as ordered lists without
    merging, since chunked segmentations may legitimately overlap.
    """
    out: Dict[str, List[Segment]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith(";;"):
                continue
            fields = line.split()
            if len(fields) != 10 or fields[0] != "SPEAKER":
                raise FormatError(path, lineno, "expected a SPEAKER record")
            tbeg = _parse_float(fields[3], path, lineno, "tbeg")
            tdur = _parse_float(fields[4], path, lineno, "tdur")
            if tdur <= 0:
                raise FormatError(path, lineno, f"non-positive duration {tdur}")
            out.setdefault(fields[1], []).append(Segment(tbeg, tbeg + tdur))
    for segments in out.values():
        segments.sort()
    return out


def write_segment_list(
    segments_by_recording: Mapping[str, Sequence[Segment]], path: PathLike
) -> None:
    """Write speakerless segments (name field ``<NA>``) as RTTM lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in sorted(segments_by_recording):
            for seg in segments_by_recording[rec]:
                fh.write(
                    f"SPEAKER {rec} 1 {_fmt_time(seg.start)} "
                    f"{_fmt_time(seg.duration)} <NA> <NA> <NA> <NA> <NA>\n"
                )


# ---------------------------------------------------------------------------
# Word / utterance annotations (CSV)

def _read_annotation_rows(path: PathLike):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(path, 1, "missing header") from None
        if header != _ANNOTATION_COLUMNS:
            raise FormatError(
                path, 1, f"expected header {','.join(_ANNOTATION_COLUMNS)}, got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_ANNOTATION_COLUMNS):
                raise FormatError(path, lineno, f"expected {len(_ANNOTATION_COLUMNS)} columns")
            yield lineno, row


def read_words(path: PathLike) -> List[WordToken]:
    """Read word-boundary annotations, sorted by (recording_id, start)."""
    words = []
    for lineno, row in _read_annotation_rows(path):
        start = _parse_float(row[2], path, lineno, "start")
        end = _parse_float(row[3], path, lineno, "end")
        try:
            words.append(WordToken(row[0], row[1], start, end, row[4]))
        except ValueError as exc:
            raise FormatError(path, lineno, str(exc)) from None
    words.sort(key=lambda w: (w.recording_id, w.start, w.end))
    return words


def read_utterances(path: PathLike) -> List[UtteranceRecord]:
    """Read utterance-boundary annotations, sorted by (recording_id, start)."""
    utts = []
    for lineno, row in _read_annotation_rows(path):
        start = _parse_float(row[2], path, lineno, "start")
        end = _parse_float(row[3], path, lineno, "end")
        try:
            utts.append(UtteranceRecord(row[0], row[1], start, end, row[4]))
        except ValueError as exc:
            raise FormatError(path, lineno, str(exc)) from None
    utts.sort(key=lambda u: (u.recording_id, u.start, u.end))
    return utts


def _write_annotations(rows: Iterable[Tuple[str, str, float, float, str]], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_ANNOTATION_COLUMNS)
        for rec, spk, start, end, text in rows:
            writer.writerow([rec, spk, _fmt_time(start), _fmt_time(end), text])


def write_words(words: Sequence[WordToken], path: PathLike) -> None:
    _write_annotations(
        ((w.recording_id, w.speaker_id, w.start, w.end, w.text) for w in words), path
    )


def write_utterances(utterances: Sequence[UtteranceRecord], path: PathLike) -> None:
    _write_annotations(
        ((u.recording_id, u.speaker_id, u.start, u.end, u.transcript) for u in utterances),
        path,
    )


# ---------------------------------------------------------------------------
# Embeddings

def read_embeddings(path: PathLike) -> List[EmbeddingRecord]:
    """Read id + vector records; all vectors must share one dimension."""
    records: List[EmbeddingRecord] = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) < 2:
                raise FormatError(path, lineno, "expected id plus at least one component")
            values = tuple(
                _parse_float(f, path, lineno, "vector component") for f in fields[1:]
            )
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise FormatError(
                    path, lineno, f"ragged dimensions: expected {dim}, got {len(values)}"
                )
            records.append(EmbeddingRecord(fields[0], values))
    return records


def write_embeddings(records: Sequence[EmbeddingRecord], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write("\t".join([rec.id] + [_fmt_float(v) for v in rec.vector]) + "\n")


# ---------------------------------------------------------------------------
# VAD streams

def read_vad_stream(path: PathLike) -> List[VadStream]:
    """Read per-recording VAD probability streams."""
    streams = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) < 3:
                raise FormatError(path, lineno, "expected id, frame period, probabilities")
            period = _parse_float(fields[1], path, lineno, "frame period")
            probs = tuple(_parse_float(f, path, lineno, "probability") for f in fields[2:])
            try:
                streams.append(VadStream(fields[0], period, probs))
            except ValueError as exc:
                raise FormatError(path, lineno, str(exc)) from None
    return streams


def write_vad_stream(streams: Sequence[VadStream], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in streams:
            parts = [s.recording_id, _fmt_float(s.frame_period)]
            parts.extend(_fmt_float(p) for p in s.probabilities)
            fh.write("\t".join(parts) + "\n")


# ---------------------------------------------------------------------------
# SOT records

_SOT_FIELDS = ("recording_id", "start", "end", "tokens", "speakers")


def read_sot(path: PathLike) -> List[SotSample]:
    """Read serialized token/speaker records (self-describing key=value lines)."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = {}
            for part in line.split("\t"):
                key, sep, value = part.partition("=")
                if not sep:
                    raise FormatError(path, lineno, f"field without '=': {part!r}")
                fields[key] = value
            missing = [k for k in _SOT_FIELDS if k not in fields]
            if missing:
                raise FormatError(path, lineno, f"missing fields: {', '.join(missing)}")
            start = _parse_float(fields["start"], path, lineno, "start")
            end = _parse_float(fields["end"], path, lineno, "end")
            tokens = tuple(fields["tokens"].split(" ")) if fields["tokens"] else ()
            speakers = tuple(fields["speakers"].split(" ")) if fields["speakers"] else ()
            if any(t == "" for t in tokens) or any(s == "" for s in speakers):
                raise FormatError(path, lineno, "empty token or speaker label")
            try:
                samples.append(
                    SotSample(fields["recording_id"], Segment(start, end), tokens, speakers)
                )
            except ValueError as exc:
                raise FormatError(path, lineno, str(exc)) from None
    return samples


def write_sot(samples: Sequence[SotSample], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(
                "\t".join(
                    [
                        f"recording_id={s.recording_id}",
                        f"start={_fmt_time(s.segment.start)}",
                        f"end={_fmt_time(s.segment.end)}",
                        f"tokens={' '.join(s.tokens)}",
                        f"speakers={' '.join(s.speakers)}",
                    ]
                )
                + "\n"
            )
