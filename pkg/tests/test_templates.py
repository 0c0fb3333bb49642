import numpy as np
import pytest

from meetkit.errors import DataError
from meetkit.ingest import EmbeddingRecord, segment_id
from meetkit.templates import (
    CandidateFilter,
    NoCandidatesError,
    average_template,
    build_all_templates,
    cosine_similarity_matrix,
    select_candidates,
)
from meetkit.timeline import Segment, normalize


def tl(*pairs):
    return normalize(pairs)


def emb(id, *values):
    return EmbeddingRecord(id, tuple(float(v) for v in values))


class TestCandidateFilter:
    def test_rejects_bad_interval(self):
        with pytest.raises(ValueError):
            CandidateFilter(min_len=5.0, max_len=2.0)

    def test_rejects_bad_n(self):
        with pytest.raises(ValueError):
            CandidateFilter(n_longest=0)


class TestSelectCandidates:
    def test_length_interval(self):
        tset = {"A": tl((0, 1), (2, 5), (6, 13))}
        got = select_candidates(tset, "A", CandidateFilter(allow_overlap=True, min_len=2, max_len=5))
        assert [(s.start, s.end) for s in got] == [(2, 5)]

    def test_closed_bounds(self):
        tset = {"A": tl((0, 2), (3, 8))}
        got = select_candidates(tset, "A", CandidateFilter(allow_overlap=True, min_len=2, max_len=5))
        assert [(s.start, s.end) for s in got] == [(0, 2), (3, 8)]

    def test_n_longest_with_tie_break(self):
        tset = {"A": tl((0, 4), (10, 14), (20, 23))}
        filt = CandidateFilter(allow_overlap=True, min_len=1, max_len=10, n_longest=2)
        got = select_candidates(tset, "A", filt)
        # Two 4 s segments win; the earlier-start one is preferred on ties.
        assert [(s.start, s.end) for s in got] == [(0, 4), (10, 14)]

    def test_overlap_exclusion_uses_exclusive_regions(self):
        tset = {"A": tl((0, 10)), "B": tl((4, 6))}
        filt = CandidateFilter(allow_overlap=False, min_len=3, max_len=5)
        got = select_candidates(tset, "A", filt)
        assert [(s.start, s.end) for s in got] == [(0, 4), (6, 10)]

    def test_fully_overlapped_speaker_errors(self):
        tset = {"A": tl((0, 5)), "B": tl((0, 5))}
        filt = CandidateFilter(allow_overlap=False, min_len=1, max_len=10)
        with pytest.raises(NoCandidatesError, match="A"):
            select_candidates(tset, "A", filt)

    def test_permissive_filter_returns_all_segments(self):
        tset = {"A": tl((0, 1), (2, 5), (6, 13))}
        filt = CandidateFilter(allow_overlap=True, min_len=1e-6, max_len=1e9)
        assert select_candidates(tset, "A", filt) == list(tset["A"])


class TestAverageTemplate:
    def test_single_vector_normalized(self):
        t = average_template([emb("x", 3.0, 4.0)])
        assert t.vector == pytest.approx((0.6, 0.8))
        assert t.support.num_segments == 1

    def test_cancellation_is_error(self):
        with pytest.raises(DataError, match="zero norm"):
            average_template([emb("a", 1.0, 0.0), emb("b", -1.0, 0.0)])

    def test_mean_then_normalize(self):
        t = average_template([emb("a", 1.0, 0.0), emb("b", 0.0, 1.0)])
        assert t.vector == pytest.approx((0.7071067811865475, 0.7071067811865475))

    def test_empty_is_error(self):
        with pytest.raises(DataError):
            average_template([])

    def test_permutation_invariant(self):
        records = [emb("a", 1.0, 2.0), emb("b", -0.5, 0.25), emb("c", 3.0, 0.0)]
        assert (
            average_template(records).vector
            == average_template(records[::-1]).vector
        )


class TestCosineSimilarityMatrix:
    def test_identical_vectors(self):
        m = cosine_similarity_matrix([emb("a", 1, 1), emb("b", 2, 2)])
        assert np.allclose(m, 1.0)

    def test_orthogonal_pair(self):
        m = cosine_similarity_matrix([emb("a", 1, 0), emb("b", 0, 1)])
        assert np.allclose(m, np.eye(2))

    def test_known_angle(self):
        m = cosine_similarity_matrix([emb("a", 1, 0), emb("b", 1, 1)])
        assert m[0, 1] == pytest.approx(0.7071067811865475)
        assert np.allclose(m, m.T)

    def test_zero_vector_rejected(self):
        with pytest.raises(DataError, match="zz"):
            cosine_similarity_matrix([emb("a", 1, 0), emb("zz", 0, 0)])


class TestBuildAllTemplates:
    def test_single_speaker_single_candidate(self):
        tset = {"A": tl((0, 3))}
        lookup = {segment_id("m", Segment(0, 3)): emb("s", 3.0, 4.0)}
        filt = CandidateFilter(allow_overlap=True, min_len=1, max_len=10)
        out = build_all_templates(tset, lookup, filt, "m")
        assert len(out) == 1
        assert out[0].speaker_id == "A"
        assert out[0].vector == pytest.approx((0.6, 0.8))
        assert out[0].support.total_duration == pytest.approx(3.0)

    def test_speakers_sorted_and_filtered(self):
        tset = {"C": tl((0, 3)), "A": tl((4, 7)), "B": tl((10, 10.5))}
        lookup = {
            segment_id("m", Segment(0, 3)): emb("c", 1.0, 0.0),
            segment_id("m", Segment(4, 7)): emb("a", 0.0, 1.0),
        }
        filt = CandidateFilter(allow_overlap=True, min_len=1, max_len=10)
        out = build_all_templates(tset, lookup, filt, "m")
        # B has no candidate in range and is skipped; order is lexicographic.
        assert [t.speaker_id for t in out] == ["A", "C"]

    def test_missing_embedding_named(self):
        tset = {"A": tl((0, 3))}
        filt = CandidateFilter(allow_overlap=True, min_len=1, max_len=10)
        with pytest.raises(DataError, match=segment_id("m", Segment(0, 3))):
            build_all_templates(tset, {}, filt, "m")


class TestAveragingImprovesTemplates:
    def test_more_segments_closer_to_center(self):
        # Synthetic speakers: unit center plus isotropic noise. Templates
        # averaged from more candidate segments should align better with the
        # true center, monotonically in expectation.
        rng = np.random.default_rng(20240917)
        dim, trials = 32, 120
        mean_cos = {}
        for n in (1, 3, 10):
            scores = []
            for _ in range(trials):
                center = rng.normal(size=dim)
                center /= np.linalg.norm(center)
                records = [
                    emb(f"e{i}", *(center + 0.8 * rng.normal(size=dim))) for i in range(n)
                ]
                t = average_template(records)
                scores.append(float(np.dot(t.vector, center)))
            mean_cos[n] = np.mean(scores)
        assert mean_cos[1] < mean_cos[3] < mean_cos[10]
