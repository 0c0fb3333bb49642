"""Serialized reference construction: per-segment token sequences in
first-in-first-out turn order, with ``<sc>`` marking speaker changes.

A segment's reference gathers every word whose midpoint lies inside the
segment, groups words into their annotated utterance turns, orders turns by
start time, and emits one ``<sc>`` token between consecutive turns of
distinct speakers. Each token carries its word's speaker; an ``<sc>``
carries the following turn's speaker.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

from .errors import DataError
from .ingest import SotSample, UtteranceRecord, WordToken
from .timeline import TIME_EPS, Segment

SC_TOKEN = "<sc>"


def _enclosing_utterance(
    word: WordToken, utterances: Sequence[UtteranceRecord]
) -> UtteranceRecord:
    candidates = [
        u
        for u in utterances
        if u.recording_id == word.recording_id
        and u.speaker_id == word.speaker_id
        and u.start - TIME_EPS <= word.midpoint <= u.end + TIME_EPS
    ]
    if not candidates:
        raise DataError(
            f"word {word.text!r} at ({word.start:.3f}, {word.end:.3f}) by "
            f"{word.speaker_id!r} has no enclosing utterance"
        )
    return min(candidates, key=lambda u: (u.start, u.end))


def build_reference(
    recording_id: str,
    segment: Segment,
    words: Sequence[WordToken],
    utterances: Sequence[UtteranceRecord],
) -> SotSample:
    """Build the serialized reference for one segment.

    Words are selected by midpoint containment; every selected word must
    belong to an utterance of the same speaker, otherwise the word is named
    in the error.
    """
    selected = [
        w
        for w in words
        if w.recording_id == recording_id
        and segment.start - TIME_EPS <= w.midpoint <= segment.end + TIME_EPS
    ]
    turns: Dict[UtteranceRecord, List[WordToken]] = {}
    for w in selected:
        turns.setdefault(_enclosing_utterance(w, utterances), []).append(w)
    ordered = sorted(turns, key=lambda u: (u.start, u.end, u.speaker_id))
    tokens: List[str] = []
    speakers: List[str] = []
    previous_speaker = None
    for turn in ordered:
        if previous_speaker is not None and turn.speaker_id != previous_speaker:
            tokens.append(SC_TOKEN)
            speakers.append(turn.speaker_id)
        for w in sorted(turns[turn], key=lambda w: (w.start, w.end, w.text)):
            tokens.append(w.text)
            speakers.append(w.speaker_id)
        previous_speaker = turn.speaker_id
    return SotSample(recording_id, segment, tuple(tokens), tuple(speakers))


def speaker_count(sample: SotSample, from_change_tokens: bool = False) -> int:
    """Number of speakers in a sample.

    Default counts distinct speaker labels. With ``from_change_tokens`` the
    count is ``#<sc> + 1``, which differs when a speaker reappears after an
    intervening turn.
    """
    if not sample.tokens:
        return 0
    if from_change_tokens:
        return sum(1 for t in sample.tokens if t == SC_TOKEN) + 1
    return len(set(sample.speakers))


def count_definitions_disagree(sample: SotSample) -> bool:
    """True when the two speaker-count definitions give different values."""
    return speaker_count(sample) != speaker_count(sample, from_change_tokens=True)


def split_hypothesis(
    recording_id: str,
    segment: Segment,
    raw_tokens: Sequence[str],
    speaker_assignments: Sequence[str],
) -> Tuple[SotSample, List[str]]:
    """Validate an external recognizer's token/speaker streams.

    Normalizes the casing of the change token. A leading or trailing change
    token is kept but flagged with a warning rather than rejected.
    """
    if len(raw_tokens) != len(speaker_assignments):
        raise DataError(
            f"{recording_id}: {len(raw_tokens)} tokens vs "
            f"{len(speaker_assignments)} speaker assignments"
        )
    tokens = tuple(SC_TOKEN if t.lower() == SC_TOKEN else t for t in raw_tokens)
    warnings = []
    if tokens and tokens[0] == SC_TOKEN:
        warnings.append(f"{recording_id}: first token is {SC_TOKEN}")
    if tokens and tokens[-1] == SC_TOKEN:
        warnings.append(f"{recording_id}: last token is {SC_TOKEN}")
    sample = SotSample(recording_id, segment, tokens, tuple(speaker_assignments))
    return sample, warnings
