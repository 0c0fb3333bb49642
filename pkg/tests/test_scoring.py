import math
import random

import pytest

from meetkit.errors import DataError
from meetkit.ingest import SotSample
from meetkit.remap import IdMapping
from meetkit.scoring import (
    CountingMatrix,
    EditSummary,
    counting_accuracy,
    edit_align,
    matched_pair_test,
    per_segment_errors,
    render_report,
    score_report,
    ser,
    wer,
)
from meetkit.sot import SC_TOKEN
from meetkit.timeline import Segment

from oracles import recursive_edit_distance


def sample(tokens, speakers, rec="m", start=0.0, end=1.0):
    return SotSample(rec, Segment(start, end), tuple(tokens), tuple(speakers))


def solo(tokens, speaker="A", **kw):
    return sample(tokens, [speaker] * len(tokens), **kw)


class TestEditAlign:
    def test_identical(self):
        summary, alignment = edit_align(["a", "b", "c"], ["a", "b", "c"])
        assert summary == EditSummary(hits=3)
        assert summary.rate == 0.0
        assert [op for _, _, op in alignment] == ["hit", "hit", "hit"]

    def test_single_substitution(self):
        summary, _ = edit_align(["a", "b", "c"], ["a", "x", "c"])
        assert summary == EditSummary(substitutions=1, hits=2)
        assert summary.rate == pytest.approx(1 / 3)

    def test_empty_sequences(self):
        summary, alignment = edit_align([], [])
        assert summary == EditSummary()
        assert alignment == []

    def test_deletions_and_insertions(self):
        summary, _ = edit_align(["a", "b"], [])
        assert summary == EditSummary(deletions=2)
        summary, _ = edit_align([], ["a", "b"])
        assert summary == EditSummary(insertions=2)

    def test_backtrace_prefers_hits_then_subs(self):
        _, alignment = edit_align(["a", "b"], ["b"])
        assert [op for _, _, op in alignment] == ["del", "hit"]
        _, alignment = edit_align(["a"], ["b"])
        assert [op for _, _, op in alignment] == ["sub"]

    def test_matches_recursive_oracle(self):
        rng = random.Random(123)
        for _ in range(100):
            ref = [rng.choice("abc") for _ in range(rng.randint(0, 8))]
            hyp = [rng.choice("abc") for _ in range(rng.randint(0, 8))]
            summary, _ = edit_align(ref, hyp)
            assert summary.errors == recursive_edit_distance(ref, hyp)

    def test_distance_is_symmetric_and_triangular(self):
        rng = random.Random(7)
        for _ in range(50):
            seqs = [
                [rng.choice("abcd") for _ in range(rng.randint(0, 6))] for _ in range(3)
            ]
            d = {}
            for i in range(3):
                for j in range(3):
                    d[i, j] = edit_align(seqs[i], seqs[j])[0].errors
            assert d[0, 1] == d[1, 0]
            assert d[0, 2] <= d[0, 1] + d[1, 2]


class TestWer:
    def test_identical_corpora(self):
        refs = [solo(["x", "y"]), solo(["z"])]
        assert wer(refs, refs).rate == 0.0

    def test_one_substitution_in_ten(self):
        refs = [solo([f"w{i}" for i in range(10)])]
        hyp_tokens = [f"w{i}" for i in range(10)]
        hyp_tokens[3] = "oops"
        hyps = [solo(hyp_tokens)]
        assert wer(refs, hyps).rate == pytest.approx(0.10)

    def test_change_tokens_excluded(self):
        refs = [sample(["a", SC_TOKEN, "b"], ["A", "B", "B"])]
        hyps = [sample(["a", "b"], ["A", "B"])]
        assert wer(refs, hyps).rate == 0.0

    def test_pooling_is_count_sum_over_total_length(self):
        refs = [solo(["a", "b"]), solo(["c", "d", "e"])]
        hyps = [solo(["a", "x"]), solo(["c", "d", "y"])]
        pooled = wer(refs, hyps)
        per_segment = [wer([r], [h]) for r, h in zip(refs, hyps)]
        assert pooled.errors == sum(s.errors for s in per_segment)
        assert pooled.ref_length == sum(s.ref_length for s in per_segment)
        assert pooled.rate == pytest.approx(2 / 5)

    def test_speaker_labels_ignored(self):
        refs = [sample(["a", "b"], ["A", "A"])]
        hyps = [sample(["a", "b"], ["Q", "R"])]
        assert wer(refs, hyps).rate == 0.0

    def test_id_mismatch_rejected(self):
        refs = [solo(["a"], rec="m1")]
        hyps = [solo(["a"], rec="m2")]
        with pytest.raises(DataError, match="mismatch"):
            wer(refs, hyps)


class TestSer:
    def test_wrong_words_perfect_speakers(self):
        refs = [sample(["a", "b", "c"], ["A", "A", "B"])]
        hyps = [sample(["x", "y", "z"], ["A", "A", "B"])]
        assert ser(refs, hyps).rate == 0.0

    def test_single_label_substitution(self):
        refs = [sample(["a", "b", "c"], ["A", "A", "B"])]
        hyps = [sample(["a", "b", "c"], ["A", "B", "B"])]
        assert ser(refs, hyps).rate == pytest.approx(1 / 3)

    def test_empty_hypothesis_all_deletions(self):
        refs = [sample(["a", "b", "c"], ["A", "A", "B"])]
        hyps = [sample([], [])]
        summary = ser(refs, hyps)
        assert summary.deletions == 3
        assert summary.rate == pytest.approx(1.0)

    def test_mapping_applied_first(self):
        refs = [sample(["a", "b"], ["A", "B"])]
        hyps = [sample(["a", "b"], ["spk00", "spk01"])]
        mapping = IdMapping({"spk00": ("A", 1.0), "spk01": ("B", 1.0)}, 2, 2)
        assert ser(refs, hyps, mapping).rate == 0.0

    def test_token_text_ignored(self):
        refs = [sample(["a", "b"], ["A", "B"])]
        hyps = [sample(["qq", "rr"], ["A", "B"])]
        assert ser(refs, hyps).rate == 0.0

    def test_relabeling_invariance(self):
        rng = random.Random(5)
        for _ in range(100):
            n = rng.randint(1, 8)
            ref_labels = [rng.choice("AB") for _ in range(n)]
            hyp_labels = [rng.choice("AB") for _ in range(n)]
            tokens = [f"t{i}" for i in range(n)]
            base = ser([sample(tokens, ref_labels)], [sample(tokens, hyp_labels)])
            relabel = {"A": "zebra", "B": "yak"}
            flipped = ser(
                [sample(tokens, [relabel[l] for l in ref_labels])],
                [sample(tokens, [relabel[l] for l in hyp_labels])],
            )
            assert base == flipped

    def test_joint_variant_reads_labels_off_word_alignment(self):
        # Hypothesis drops the middle word; independent label alignment sees
        # no error (labels A,B vs A,B) while the joint variant sees the
        # deleted token's label.
        refs = [sample(["a", "b", "c"], ["A", "A", "B"])]
        hyps = [sample(["a", "c"], ["A", "B"])]
        independent = ser(refs, hyps)
        joint = ser(refs, hyps, joint=True)
        assert independent.errors == 1  # one deletion in the label stream
        assert joint.deletions == 1
        assert joint.hits == 2


class TestCountingAccuracy:
    def test_all_correct(self):
        refs = [sample(["a"], ["A"]), sample(["a", SC_TOKEN, "b"], ["A", "B", "B"])]
        matrix = counting_accuracy(refs, refs)
        assert matrix.accuracy(1) == 1.0
        assert matrix.accuracy(2) == 1.0
        assert matrix.percentage(1, 1) == pytest.approx(100.0)

    def test_hand_built_confusions(self):
        # 100 true-2-speaker segments, 69 estimated as 2, 31 as 1.
        ref = sample(["a", SC_TOKEN, "b"], ["A", "B", "B"])
        hyp_right = ref
        hyp_wrong = sample(["a", "b"], ["A", "A"])
        refs = [ref] * 100
        hyps = [hyp_right] * 69 + [hyp_wrong] * 31
        matrix = counting_accuracy(refs, hyps)
        assert matrix.counts == {(2, 2): 69, (2, 1): 31}
        assert matrix.percentage(2, 2) == pytest.approx(69.00)
        assert matrix.row_total(2) == 100

    def test_rows_sum_to_hundred(self):
        rng = random.Random(11)
        refs, hyps = [], []
        for _ in range(200):
            k = rng.randint(1, 4)
            i = max(1, min(4, k + rng.choice([-1, 0, 0, 1])))
            ref_labels = [f"S{j}" for j in range(k)]
            hyp_labels = [f"S{j}" for j in range(i)]
            refs.append(sample([f"w{j}" for j in range(k)], ref_labels))
            hyps.append(sample([f"w{j}" for j in range(i)], hyp_labels))
        matrix = counting_accuracy(refs, hyps)
        for k in matrix.true_counts():
            total = sum(matrix.percentage(k, i) for i in matrix.estimated_counts())
            assert total == pytest.approx(100.0, abs=0.01)

    def test_empty_corpus_gives_empty_matrix(self):
        assert counting_accuracy([], []) == CountingMatrix({})


class TestMatchedPairTest:
    def test_identical_vectors(self):
        result = matched_pair_test([3, 1, 4], [3, 1, 4])
        assert result.p_value == 1.0
        assert result.z == 0.0

    def test_constant_positive_difference(self):
        result = matched_pair_test([2] * 50, [1] * 50)
        assert result.p_value == 0.0
        assert math.isinf(result.z)

    def test_hand_computed_case(self):
        # differences [1, -1, 2, 0]: mean 0.5, sample sd 1.29099.
        result = matched_pair_test([1, 0, 2, 1], [0, 1, 0, 1])
        assert result.z == pytest.approx(0.7745966692, abs=1e-9)
        assert result.p_value == pytest.approx(0.4385780261, abs=1e-9)
        assert result.n_segments == 4

    def test_too_few_segments(self):
        with pytest.raises(DataError):
            matched_pair_test([1], [2])


class TestScoreReport:
    def corpus(self):
        refs = [
            solo(["a", "b"], rec="m", start=0, end=1),
            sample(["c", SC_TOKEN, "d"], ["A", "B", "B"], rec="m", start=2, end=3),
        ]
        return refs

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            score_report([], [])

    def test_single_perfect_segment(self):
        refs = [solo(["a", "b"])]
        report = score_report(refs, refs)
        assert report.subsets["total"].word_errors.rate == 0.0
        assert report.subsets["total"].speaker_errors.rate == 0.0
        assert report.counting.accuracy(1) == 1.0

    def test_subsets_partition_corpus(self):
        refs = self.corpus()
        report = score_report(refs, refs)
        assert set(report.subsets) == {"1-spk", "2-spk", "total"}
        assert (
            report.subsets["1-spk"].n_segments + report.subsets["2-spk"].n_segments
            == report.subsets["total"].n_segments
        )

    def test_by_speakers_filter(self):
        refs = self.corpus()
        report = score_report(refs, refs, by_speakers=[2])
        assert set(report.subsets) == {"2-spk", "total"}

    def test_significance_pairs(self):
        refs = [solo([f"w{i}"], start=float(i), end=float(i) + 0.5) for i in range(6)]
        hyps = [solo(["x"], start=float(i), end=float(i) + 0.5) for i in range(6)]
        report = score_report(refs, hyps, baseline_hyps=refs)
        assert report.significance is not None
        assert report.significance["words"].p_value < 0.05

    def test_render_contains_rows(self):
        refs = self.corpus()
        text = render_report(score_report(refs, refs))
        assert "total" in text and "1-spk" in text and "counting" in text


class TestPerSegmentErrors:
    def test_word_and_speaker_streams(self):
        refs = [sample(["a", "b"], ["A", "B"])]
        hyps = [sample(["a", "x"], ["A", "A"])]
        assert per_segment_errors(refs, hyps, "words") == [1]
        assert per_segment_errors(refs, hyps, "speakers") == [1]
        with pytest.raises(ValueError):
            per_segment_errors(refs, hyps, "chars")
