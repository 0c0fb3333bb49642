"""Speaker-embedding template extraction.

A template is the L2-normalized arithmetic mean of the embeddings of a
speaker's candidate segments. Candidates are filtered by overlap exclusion,
length interval (closed bounds), and an optional n-longest selection.
Normalization after averaging is a documented choice: downstream dot-product
scoring should reflect direction, not support size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError
from .ingest import EmbeddingRecord, segment_id
from .timeline import TIME_EPS, Segment, SpeakerTimelineSet, exclusive_regions


class NoCandidatesError(DataError):
    """A speaker has no segments left after candidate filtering."""


@dataclass(frozen=True)
class CandidateFilter:
    """Candidate-segment filter: overlap policy, length interval, selection."""

    allow_overlap: bool = False
    min_len: float = 2.0
    max_len: float = 5.0
    n_longest: Optional[int] = None  # None selects all candidates

    def __post_init__(self):
        if not 0 < self.min_len < self.max_len:
            raise ValueError(f"need 0 < min_len < max_len, got {self.min_len}..{self.max_len}")
        if self.n_longest is not None and self.n_longest < 1:
            raise ValueError(f"n_longest must be >= 1, got {self.n_longest}")

    def describe(self) -> str:
        sel = "all" if self.n_longest is None else f"{self.n_longest} longest"
        overlap = "overlap allowed" if self.allow_overlap else "non-overlapped only"
        return f"{self.min_len:g}-{self.max_len:g} s, {sel}, {overlap}"


@dataclass(frozen=True)
class TemplateSupport:
    num_segments: int
    total_duration: float


@dataclass(frozen=True)
class SpeakerTemplate:
    speaker_id: str
    vector: Tuple[float, ...]
    support: TemplateSupport


def select_candidates(
    tset: SpeakerTimelineSet, speaker_id: str, filt: CandidateFilter
) -> List[Segment]:
    """Pick a speaker's candidate segments under the filter, in start order."""
    if speaker_id not in tset:
        raise KeyError(f"unknown speaker_id: {speaker_id!r}")
    source = tset[speaker_id] if filt.allow_overlap else exclusive_regions(tset, speaker_id)
    candidates = [
        seg
        for seg in source
        if filt.min_len - TIME_EPS <= seg.duration <= filt.max_len + TIME_EPS
    ]
    if filt.n_longest is not None:
        candidates = sorted(candidates, key=lambda s: (-s.duration, s.start))[: filt.n_longest]
        candidates.sort(key=lambda s: s.start)
    if not candidates:
        raise NoCandidatesError(
            f"no candidate segments for speaker {speaker_id!r} with filter ({filt.describe()})"
        )
    return candidates


def _stack(embeddings: Sequence[EmbeddingRecord]) -> np.ndarray:
    if not embeddings:
        raise DataError("no embeddings given")
    dims = {len(e.vector) for e in embeddings}
    if len(dims) != 1:
        raise DataError(f"inconsistent embedding dimensions: {sorted(dims)}")
    return np.asarray([e.vector for e in embeddings], dtype=float)


def average_template(
    embeddings: Sequence[EmbeddingRecord],
    speaker_id: str = "spk",
    total_duration: float = 0.0,
) -> SpeakerTemplate:
    """Arithmetic mean of the embeddings, L2-normalized."""
    mean = _stack(embeddings).mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-12:
        raise DataError(f"mean embedding for {speaker_id!r} has zero norm")
    return SpeakerTemplate(
        speaker_id,
        tuple((mean / norm).tolist()),
        TemplateSupport(len(embeddings), total_duration),
    )


def cosine_similarity_matrix(embeddings: Sequence[EmbeddingRecord]) -> np.ndarray:
    """Pairwise cosine similarities, symmetric with unit diagonal."""
    vectors = _stack(embeddings)
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms < 1e-12):
        bad = embeddings[int(np.argmin(norms))].id
        raise DataError(f"zero-norm embedding: {bad!r}")
    unit = vectors / norms[:, None]
    sim = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(sim, 1.0)
    return sim


def build_all_templates(
    tset: SpeakerTimelineSet,
    embedding_lookup: Mapping[str, EmbeddingRecord],
    filt: CandidateFilter,
    recording_id: str,
) -> List[SpeakerTemplate]:
    """One template per speaker that yields candidates, in speaker-id order.

    Candidate segments join to embeddings through the deterministic segment
    id (recording id plus millisecond boundaries). A selected candidate
    without an embedding record is an error naming the missing id.
    """
    out: List[SpeakerTemplate] = []
    for speaker_id in sorted(tset):
        try:
            candidates = select_candidates(tset, speaker_id, filt)
        except NoCandidatesError:
            continue
        records = []
        for seg in candidates:
            key = segment_id(recording_id, seg)
            if key not in embedding_lookup:
                raise DataError(f"missing embedding for candidate segment {key!r}")
            records.append(embedding_lookup[key])
        total = sum(seg.duration for seg in candidates)
        out.append(average_template(records, speaker_id, total))
    return out
