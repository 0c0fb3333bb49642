"""Remap diarization speaker IDs onto reference speaker IDs by segment-list
IoU.

Estimated lists are each diarized speaker's exclusive (non-overlapped)
regions, computed here; reference lists are each reference speaker's full
timeline. (A symmetric variant that also strips overlapped reference speech
would be possible; the asymmetric form follows the pipeline's usage, where
diarization output carries one speaker per segment.)

Two modes: ``literal`` maps every estimated speaker independently to its
best-IoU reference speaker (many-to-one allowed); ``one_to_one`` solves a
maximum-weight assignment instead, mapping leftover estimated speakers to
fresh ``unkNN`` ids. Literal is the default; one-to-one is offered because
many-to-one can inflate the speaker error rate when diarization splits a
speaker.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError, FormatError
from .ingest import SotSample
from .timeline import SpeakerTimelineSet, exclusive_regions, iou

_MODES = ("literal", "one_to_one")


@dataclass(frozen=True)
class IdMapping:
    """Estimated-id to (reference-id, IoU) pairs, plus speaker counts.

    ``flagged`` lists estimated speakers that had no exclusive speech and
    were therefore assigned the lexicographically-first reference id with
    IoU 0.
    """

    pairs: Dict[str, Tuple[str, float]]
    n_estimated: int
    n_reference: int
    flagged: Tuple[str, ...] = field(default=())


def remap_ids(
    sd: SpeakerTimelineSet, ref: SpeakerTimelineSet, mode: str = "literal"
) -> IdMapping:
    """Assign each estimated speaker the reference id with the highest IoU.

    Ties break to the lexicographically smallest reference id.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    if not sd or not ref:
        raise DataError("both estimated and reference sets must be non-empty")
    est_ids = sorted(sd)
    ref_ids = sorted(ref)
    exclusive = {i: exclusive_regions(sd, i) for i in est_ids}
    flagged = tuple(i for i in est_ids if not exclusive[i])
    matrix = np.array(
        [[iou(exclusive[i], ref[k]) for k in ref_ids] for i in est_ids]
    )
    pairs: Dict[str, Tuple[str, float]] = {}
    if mode == "literal":
        for row, i in enumerate(est_ids):
            best = int(np.argmax(matrix[row]))  # first index wins ties: smallest id
            pairs[i] = (ref_ids[best], float(matrix[row, best]))
    else:
        rows, cols = linear_sum_assignment(-matrix)
        assigned = {int(r): int(c) for r, c in zip(rows, cols)}
        fresh = 0
        for row, i in enumerate(est_ids):
            if row in assigned:
                col = assigned[row]
                pairs[i] = (ref_ids[col], float(matrix[row, col]))
            else:
                pairs[i] = (f"unk{fresh:02d}", 0.0)
                fresh += 1
    return IdMapping(pairs, len(est_ids), len(ref_ids), flagged)


def apply_mapping(sample: SotSample, mapping: IdMapping) -> SotSample:
    """Substitute speaker labels through the mapping; tokens are untouched."""
    relabeled = []
    for label in sample.speakers:
        if label not in mapping.pairs:
            raise DataError(f"speaker label {label!r} is not in the id mapping")
        relabeled.append(mapping.pairs[label][0])
    return SotSample(sample.recording_id, sample.segment, sample.tokens, tuple(relabeled))


def write_mapping(mapping: IdMapping, path) -> None:
    """Write a mapping report: estimated_id, reference_id, IoU per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f";; estimated={mapping.n_estimated} reference={mapping.n_reference}\n")
        if mapping.flagged:
            fh.write(f";; flagged={','.join(mapping.flagged)}\n")
        for est in sorted(mapping.pairs):
            ref_id, value = mapping.pairs[est]
            fh.write(f"{est}\t{ref_id}\t{value:.6f}\n")


def read_mapping(path) -> IdMapping:
    """Inverse of :func:`write_mapping`."""
    pairs: Dict[str, Tuple[str, float]] = {}
    n_est = n_ref = 0
    flagged: Tuple[str, ...] = ()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith(";;"):
                body = line[2:].strip()
                if body.startswith("estimated="):
                    head = dict(part.split("=", 1) for part in body.split())
                    n_est = int(head.get("estimated", 0))
                    n_ref = int(head.get("reference", 0))
                elif body.startswith("flagged="):
                    flagged = tuple(body.split("=", 1)[1].split(","))
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise FormatError(path, lineno, "expected estimated_id, reference_id, iou")
            try:
                value = float(fields[2])
            except ValueError:
                raise FormatError(path, lineno, f"unparsable iou {fields[2]!r}") from None
            pairs[fields[0]] = (fields[1], value)
    if not pairs:
        raise FormatError(path, 1, "empty mapping file")
    return IdMapping(pairs, n_est or len(pairs), n_ref, flagged)
