"""Word error rate, token-level speaker error rate, speaker-counting
accuracy, and the matched-pair segment significance test.

Counts pool at the corpus level (sum of per-segment counts over total
reference length), the standard WER convention. Change tokens are excluded
from both the word and the speaker-label streams: they are structural, not
content (configurable via ``include_change_tokens``).

Speaker-label error is computed by an independent alignment of the label
sequences, mirroring how the word streams are aligned; a joint variant reads
label decisions off the word alignment path instead (``joint=True``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import DataError
from .ingest import SotSample, segment_id
from .remap import IdMapping, apply_mapping
from .sot import SC_TOKEN, count_definitions_disagree, speaker_count

Alignment = List[Tuple[Optional[int], Optional[int], str]]


@dataclass(frozen=True)
class EditSummary:
    """Edit-operation tallies; rate is (S+I+D) / reference length."""

    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    hits: int = 0

    def __add__(self, other: "EditSummary") -> "EditSummary":
        return EditSummary(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.hits + other.hits,
        )

    @property
    def ref_length(self) -> int:
        return self.hits + self.substitutions + self.deletions

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        if self.ref_length > 0:
            return self.errors / self.ref_length
        return 0.0 if self.errors == 0 else math.inf


@dataclass(frozen=True)
class CountingMatrix:
    """Speaker-counting tallies: N[(true k, estimated i)] -> segment count."""

    counts: Dict[Tuple[int, int], int] = field(default_factory=dict)

    def row_total(self, k: int) -> int:
        return sum(n for (kk, _), n in self.counts.items() if kk == k)

    def percentage(self, k: int, i: int) -> float:
        total = self.row_total(k)
        return 100.0 * self.counts.get((k, i), 0) / total if total else 0.0

    def accuracy(self, k: int) -> float:
        """Fraction of true-k segments estimated as k."""
        total = self.row_total(k)
        return self.counts.get((k, k), 0) / total if total else 0.0

    def true_counts(self) -> List[int]:
        return sorted({k for k, _ in self.counts})

    def estimated_counts(self) -> List[int]:
        return sorted({i for _, i in self.counts})


@dataclass(frozen=True)
class MatchedPairResult:
    z: float
    p_value: float
    n_segments: int


def edit_align(
    ref: Sequence[str], hyp: Sequence[str]
) -> Tuple[EditSummary, Alignment]:
    """Levenshtein alignment with unit costs.

    Among equal-cost paths the backtrace prefers hits, then substitutions,
    then deletions, then insertions.
    """
    n, m = len(ref), len(hyp)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dp[i][0] = i
    for j in range(1, m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        row, prev = dp[i], dp[i - 1]
        ref_tok = ref[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (0 if ref_tok == hyp[j - 1] else 1)
            row[j] = min(diag, prev[j] + 1, row[j - 1] + 1)
    alignment: Alignment = []
    i, j = n, m
    while i > 0 or j > 0:
        cost = dp[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and cost == dp[i - 1][j - 1]:
            alignment.append((i - 1, j - 1, "hit"))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and cost == dp[i - 1][j - 1] + 1:
            alignment.append((i - 1, j - 1, "sub"))
            i, j = i - 1, j - 1
        elif i > 0 and cost == dp[i - 1][j] + 1:
            alignment.append((i - 1, None, "del"))
            i = i - 1
        else:
            alignment.append((None, j - 1, "ins"))
            j = j - 1
    alignment.reverse()
    ops = [op for _, _, op in alignment]
    summary = EditSummary(
        substitutions=ops.count("sub"),
        insertions=ops.count("ins"),
        deletions=ops.count("del"),
        hits=ops.count("hit"),
    )
    return summary, alignment


def _content(sample: SotSample, include_change_tokens: bool) -> Tuple[List[str], List[str]]:
    tokens, labels = [], []
    for token, label in zip(sample.tokens, sample.speakers):
        if token == SC_TOKEN and not include_change_tokens:
            continue
        tokens.append(token)
        labels.append(label)
    return tokens, labels


def _check_paired(refs: Sequence[SotSample], hyps: Sequence[SotSample]) -> None:
    if len(refs) != len(hyps):
        raise DataError(f"{len(refs)} reference segments vs {len(hyps)} hypotheses")
    for r, h in zip(refs, hyps):
        if segment_id(r.recording_id, r.segment) != segment_id(h.recording_id, h.segment):
            raise DataError(
                f"segment id mismatch: {segment_id(r.recording_id, r.segment)} vs "
                f"{segment_id(h.recording_id, h.segment)}"
            )


def wer(refs: Sequence[SotSample], hyps: Sequence[SotSample]) -> EditSummary:
    """Corpus-pooled word error counts; change tokens excluded."""
    _check_paired(refs, hyps)
    total = EditSummary()
    for r, h in zip(refs, hyps):
        ref_tokens, _ = _content(r, include_change_tokens=False)
        hyp_tokens, _ = _content(h, include_change_tokens=False)
        summary, _ = edit_align(ref_tokens, hyp_tokens)
        total = total + summary
    return total


def ser(
    refs: Sequence[SotSample],
    hyps: Sequence[SotSample],
    mapping: Optional[IdMapping] = None,
    joint: bool = False,
) -> EditSummary:
    """Corpus-pooled token-level speaker-label error counts.

    The id mapping, when given, is applied to hypothesis labels first.
    Labels of change tokens are excluded. With ``joint=True`` the label
    decisions are read off the word alignment path instead of aligning the
    label sequences independently.
    """
    _check_paired(refs, hyps)
    if mapping is not None:
        hyps = [apply_mapping(h, mapping) for h in hyps]
    total = EditSummary()
    for r, h in zip(refs, hyps):
        ref_tokens, ref_labels = _content(r, include_change_tokens=False)
        hyp_tokens, hyp_labels = _content(h, include_change_tokens=False)
        if joint:
            _, alignment = edit_align(ref_tokens, hyp_tokens)
            s = i_ = d = hit = 0
            for ri, hi, op in alignment:
                if op in ("hit", "sub"):
                    if ref_labels[ri] == hyp_labels[hi]:
                        hit += 1
                    else:
                        s += 1
                elif op == "del":
                    d += 1
                else:
                    i_ += 1
            summary = EditSummary(s, i_, d, hit)
        else:
            summary, _ = edit_align(ref_labels, hyp_labels)
        total = total + summary
    return total


def counting_accuracy(
    refs: Sequence[SotSample], hyps: Sequence[SotSample]
) -> CountingMatrix:
    """Tally estimated vs. true speaker counts per segment."""
    _check_paired(refs, hyps)
    counts: Dict[Tuple[int, int], int] = {}
    for r, h in zip(refs, hyps):
        key = (speaker_count(r), speaker_count(h))
        counts[key] = counts.get(key, 0) + 1
    return CountingMatrix(counts)


def matched_pair_test(
    errors_a: Sequence[int], errors_b: Sequence[int]
) -> MatchedPairResult:
    """Matched-pair segment test on aligned per-segment error counts.

    z = mean(d) * sqrt(n) / stddev(d) with the sample standard deviation;
    the p-value is two-sided under the normal approximation. A zero-variance
    difference vector gives p = 1 when the mean is zero, p = 0 otherwise.
    """
    if len(errors_a) != len(errors_b):
        raise DataError(f"unaligned error vectors: {len(errors_a)} vs {len(errors_b)}")
    n = len(errors_a)
    if n < 2:
        raise DataError(f"matched-pair test needs at least 2 segments, got {n}")
    diffs = [a - b for a, b in zip(errors_a, errors_b)]
    mean = sum(diffs) / n
    variance = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if variance == 0.0:
        if mean == 0.0:
            return MatchedPairResult(0.0, 1.0, n)
        return MatchedPairResult(math.copysign(math.inf, mean), 0.0, n)
    z = mean * math.sqrt(n) / math.sqrt(variance)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return MatchedPairResult(z, p, n)


def per_segment_errors(
    refs: Sequence[SotSample], hyps: Sequence[SotSample], what: str = "words"
) -> List[int]:
    """Per-segment error counts for significance testing.

    ``what`` selects the aligned stream: "words" or "speakers".
    """
    _check_paired(refs, hyps)
    out = []
    for r, h in zip(refs, hyps):
        ref_tokens, ref_labels = _content(r, include_change_tokens=False)
        hyp_tokens, hyp_labels = _content(h, include_change_tokens=False)
        if what == "words":
            summary, _ = edit_align(ref_tokens, hyp_tokens)
        elif what == "speakers":
            summary, _ = edit_align(ref_labels, hyp_labels)
        else:
            raise ValueError(f"unknown stream {what!r}")
        out.append(summary.errors)
    return out


@dataclass(frozen=True)
class SubsetScores:
    n_segments: int
    word_errors: EditSummary
    speaker_errors: EditSummary


@dataclass(frozen=True)
class ScoreReport:
    subsets: Dict[str, SubsetScores]
    counting: CountingMatrix
    n_segments: int
    count_definition_disagreements: int
    significance: Optional[Dict[str, MatchedPairResult]] = None


def score_report(
    refs: Sequence[SotSample],
    hyps: Sequence[SotSample],
    mapping: Optional[IdMapping] = None,
    baseline_hyps: Optional[Sequence[SotSample]] = None,
    by_speakers: Optional[Sequence[int]] = None,
) -> ScoreReport:
    """Assemble the full evaluation report.

    Subsets partition the corpus by the reference speaker count; a "total"
    row always appears. When a baseline hypothesis corpus is given, matched
    pair tests compare its per-segment word and speaker errors against the
    main hypothesis.
    """
    if not refs:
        raise DataError("empty corpus")
    _check_paired(refs, hyps)
    if mapping is not None:
        hyps = [apply_mapping(h, mapping) for h in hyps]
    ks = sorted({speaker_count(r) for r in refs})
    if by_speakers is not None:
        ks = [k for k in ks if k in set(by_speakers)]
    subsets: Dict[str, SubsetScores] = {}
    for k in ks:
        idx = [i for i, r in enumerate(refs) if speaker_count(r) == k]
        sub_refs = [refs[i] for i in idx]
        sub_hyps = [hyps[i] for i in idx]
        subsets[f"{k}-spk"] = SubsetScores(
            len(idx), wer(sub_refs, sub_hyps), ser(sub_refs, sub_hyps)
        )
    subsets["total"] = SubsetScores(len(refs), wer(refs, hyps), ser(refs, hyps))
    counting = counting_accuracy(refs, hyps)
    disagreements = sum(1 for h in hyps if count_definitions_disagree(h))
    significance = None
    if baseline_hyps is not None:
        _check_paired(refs, baseline_hyps)
        significance = {
            "words": matched_pair_test(
                per_segment_errors(refs, hyps, "words"),
                per_segment_errors(refs, baseline_hyps, "words"),
            ),
            "speakers": matched_pair_test(
                per_segment_errors(refs, hyps, "speakers"),
                per_segment_errors(refs, baseline_hyps, "speakers"),
            ),
        }
    return ScoreReport(subsets, counting, len(refs), disagreements, significance)


def render_report(report: ScoreReport) -> str:
    """Plain-text rendering: per-subset rates, counting matrix, significance."""
    lines = []
    lines.append(f"{'subset':<10} {'n_seg':>6} {'WER%':>8} {'SER%':>8}")
    for name, scores in report.subsets.items():
        lines.append(
            f"{name:<10} {scores.n_segments:>6} "
            f"{100.0 * scores.word_errors.rate:>8.2f} "
            f"{100.0 * scores.speaker_errors.rate:>8.2f}"
        )
    lines.append("")
    lines.append("speaker counting (rows: true, columns: estimated, %):")
    cols = report.counting.estimated_counts()
    if cols:
        lines.append("       " + " ".join(f"{i:>7}" for i in cols))
        for k in report.counting.true_counts():
            row = " ".join(f"{report.counting.percentage(k, i):>7.2f}" for i in cols)
            lines.append(f"{k:>6} {row}")
    if report.count_definition_disagreements:
        lines.append(
            f"note: {report.count_definition_disagreements} segments where distinct-speaker "
            "and change-token counts disagree"
        )
    if report.significance is not None:
        for name, result in report.significance.items():
            lines.append(
                f"matched-pair ({name}): z={result.z:.3f} p={result.p_value:.4f} "
                f"n={result.n_segments}"
            )
    return "\n".join(lines) + "\n"
