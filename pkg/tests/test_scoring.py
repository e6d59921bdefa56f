import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clipscope import (
    ClassHistogram,
    DimensionMismatchError,
    EmbeddingTable,
    EmptyTableError,
    InvalidCountsError,
    MinedLabelSet,
    MiningConfig,
    ScoreMode,
    ScorerConfig,
    Verdict,
    compute_p1,
    compute_p2,
    mine,
    score_sample,
    score_stream,
)
from test_mining import table_with_sims

# oracle: 1 / (1 + e^-0.2) at 50-digit precision, frozen to float64
P1_TWO_LOGITS = 0.549833997312478
# oracle: (e^0.6 + e^0.2) / (e^0.6 + e^0.2 + e^0.4) at double precision, frozen
P2_THREE_LOGITS = 0.6710670777110933


def empty_neg(dim=3):
    return MinedLabelSet.empty(dim)


def neg_with_sims(sims):
    table = table_with_sims(sims, labels=[f"n{i}" for i in range(len(sims))])
    return MinedLabelSet(
        labels=table.labels,
        vectors=table.vectors.copy(),
        distances=np.zeros(len(sims)),
        sides=tuple(__import__("clipscope").Side.FARTHEST for _ in sims),
        config=MiningConfig(m=len(sims)),
        dim=3,
    )


H = np.array([1.0, 0.0, 0.0])


class TestComputeP1:
    def test_single_class(self):
        p1, i_star = compute_p1(H, table_with_sims([0.4]), tau=0.01)
        assert p1 == 1.0
        assert i_star == 0

    def test_two_class_value(self):
        table = table_with_sims([0.5, 0.3])
        p1, i_star = compute_p1(H, table, tau=1.0)
        # the stated definition: max entry of the scaled softmax over
        # the actual similarities
        from clipscope import scaled_softmax, sim

        sims = [sim(H, table.vectors[j]) for j in range(2)]
        assert p1 == pytest.approx(float(scaled_softmax(sims, 1.0).max()), abs=1e-15)
        # frozen oracle for ideal logits (0.5, 0.3); the table stores rows at
        # float32, which perturbs the similarities by up to ~1e-7
        assert p1 == pytest.approx(P1_TWO_LOGITS, abs=2e-7)
        assert i_star == 0

    def test_tie_breaks_low_index(self):
        p1, i_star = compute_p1(H, table_with_sims([0.4, 0.4]), tau=1.0)
        assert i_star == 0
        assert p1 == pytest.approx(0.5, abs=1e-12)

    def test_errors(self):
        with pytest.raises(EmptyTableError):
            compute_p1(H, EmbeddingTable.from_rows([], [], dim=3), tau=1.0)
        with pytest.raises(DimensionMismatchError):
            compute_p1(np.array([1.0, 0.0]), table_with_sims([0.5]), tau=1.0)

    @given(
        st.lists(st.floats(min_value=-1, max_value=1), min_size=1, max_size=12),
        st.sampled_from([0.01, 0.1, 1.0, 100.0]),
    )
    def test_argmax_invariant_to_tau(self, sims, tau):
        table = table_with_sims(sims)
        _, i_star = compute_p1(H, table, tau=tau)
        _, i_ref = compute_p1(H, table, tau=1.0)
        assert i_star == i_ref
        actual = np.array([float(table.vectors[j] @ H) for j in range(len(table))])
        assert i_star == int(np.argmax(actual))


class TestComputeP2:
    def test_empty_negatives_exact_one(self):
        assert compute_p2(H, table_with_sims([0.5]), empty_neg(), tau=0.01) == 1.0

    @pytest.mark.parametrize("tau", [0.01, 0.5, 1.0, 7.0])
    def test_symmetric_half(self, tau):
        p2 = compute_p2(H, table_with_sims([0.5]), neg_with_sims([0.5]), tau=tau)
        assert p2 == pytest.approx(0.5, abs=1e-12)

    def test_three_logit_value(self):
        table = table_with_sims([0.6, 0.2])
        neg = neg_with_sims([0.4])
        p2 = compute_p2(H, table, neg, tau=1.0)
        # independent scalar evaluation of the same quotient on the actual
        # (float32-quantized) similarities
        s = [float(table.vectors[0] @ H), float(table.vectors[1] @ H)]
        n = float(neg.vectors[0] @ H)
        direct = (math.exp(s[0]) + math.exp(s[1])) / (
            math.exp(s[0]) + math.exp(s[1]) + math.exp(n)
        )
        assert p2 == pytest.approx(direct, abs=1e-14)
        # frozen oracle for ideal logits {0.6, 0.2} vs {0.4}
        assert p2 == pytest.approx(P2_THREE_LOGITS, abs=2e-7)

    def test_dimension_mismatch(self):
        bad = MinedLabelSet.empty(4)
        ok = compute_p2(H, table_with_sims([0.5]), bad, tau=1.0)
        assert ok == 1.0  # empty set short-circuits before the dim check
        with pytest.raises(DimensionMismatchError):
            compute_p2(np.array([1.0, 0.0]), table_with_sims([0.5]), empty_neg(), 1.0)


class TestClassHistogram:
    def test_fresh_uniform(self):
        hist = ClassHistogram(4)
        assert hist.snapshot() == (1, 1, 1, 1)
        assert hist.total == 4
        for i in range(4):
            assert hist.likelihood(i) == 0.25

    def test_update_moves_likelihood(self):
        hist = ClassHistogram(4)
        hist.record(2)
        assert hist.likelihood(2) == pytest.approx(2 / 5)
        assert hist.likelihood(0) == pytest.approx(1 / 5)

    def test_single_class_always_one(self):
        hist = ClassHistogram(1)
        assert hist.likelihood(0) == 1.0
        hist.record(0)
        assert hist.likelihood(0) == 1.0

    def test_index_errors(self):
        hist = ClassHistogram(3)
        with pytest.raises(IndexError):
            hist.likelihood(3)
        with pytest.raises(IndexError):
            hist.likelihood(-1)
        with pytest.raises(IndexError):
            hist.record(7)

    def test_snapshot_restore_roundtrip(self):
        hist = ClassHistogram.restore([5, 1, 9])
        assert hist.snapshot() == (5, 1, 9)
        assert hist.total == 15
        again = ClassHistogram.restore(hist.snapshot())
        assert again == hist

    def test_restore_rejects_bad_counts(self):
        with pytest.raises(InvalidCountsError):
            ClassHistogram.restore([0, 1])
        with pytest.raises(InvalidCountsError):
            ClassHistogram.restore([])
        with pytest.raises(InvalidCountsError):
            ClassHistogram.restore([1, 1], expected_classes=3)


class TestScoreModes:
    def test_composition_values(self):
        p0, p1, p2 = 0.25, P1_TWO_LOGITS, P2_THREE_LOGITS
        assert ScoreMode.P1.compose(p0, p1, p2) == p1
        assert ScoreMode.P2.compose(p0, p1, p2) == p2
        assert ScoreMode.P1_OVER_P0.compose(p0, p1, p2) == p1 / p0
        assert ScoreMode.P2_OVER_P0.compose(p0, p1, p2) == p2 / p0
        assert ScoreMode.P1P2.compose(p0, p1, p2) == p1 * p2
        # oracle: component oracles composed at double precision, frozen
        assert ScoreMode.P1P2_OVER_P0.compose(p0, p1, p2) == pytest.approx(
            1.475901975210775, abs=1e-12
        )

    @given(
        st.floats(min_value=1e-6, max_value=1.0),
        st.floats(min_value=1e-6, max_value=1.0),
        st.floats(min_value=1e-6, max_value=1.0),
    )
    def test_mode_consistency(self, p0, p1, p2):
        joint = ScoreMode.P1P2.compose(p0, p1, p2)
        posterior = ScoreMode.P1P2_OVER_P0.compose(p0, p1, p2)
        assert math.isclose(joint, posterior * p0, rel_tol=1e-12)


class TestScoreSample:
    def test_degenerate_single_class(self):
        table = table_with_sims([0.4])
        hist = ClassHistogram(1)
        rec = score_sample(H, table, empty_neg(), hist, ScorerConfig())
        assert rec.p1 == 1.0 and rec.p2 == 1.0 and rec.p0 == 1.0
        assert rec.score == 1.0
        assert rec.verdict is Verdict.ID
        assert hist.snapshot() == (2,)

    def test_p0_uses_counts_before_increment(self):
        table = table_with_sims([0.9, 0.1, 0.1, 0.1])
        hist = ClassHistogram(4)
        rec = score_sample(H, table, empty_neg(), hist, ScorerConfig(tau=1.0))
        assert rec.p0 == 0.25
        assert hist.snapshot() == (2, 1, 1, 1)

    def test_repeat_penalty_ratio(self):
        table = table_with_sims([0.9, 0.1, 0.1, 0.1])
        hist = ClassHistogram(4)
        cfg = ScorerConfig(tau=1.0)
        first = score_sample(H, table, empty_neg(), hist, cfg)
        second = score_sample(H, table, empty_neg(), hist, cfg)
        # p0 progresses 1/4 -> 2/5, so the score shrinks by exactly (1/4)/(2/5)
        assert second.score == pytest.approx(0.625 * first.score, rel=1e-12)

    def test_strictly_decreasing_on_repeats(self):
        table = table_with_sims([0.9, 0.2, -0.3])
        neg = neg_with_sims([0.5, 0.0])
        for mode in (ScoreMode.P1P2_OVER_P0, ScoreMode.P1_OVER_P0, ScoreMode.P2_OVER_P0):
            hist = ClassHistogram(3)
            cfg = ScorerConfig(tau=0.01, score_mode=mode)
            scores = [score_sample(H, table, neg, hist, cfg).score for _ in range(25)]
            assert all(a > b for a, b in zip(scores, scores[1:]))

    def test_component_ranges(self):
        rng = np.random.default_rng(0)
        table = EmbeddingTable.from_rows(
            [f"c{i}" for i in range(6)], rng.standard_normal((6, 5))
        )
        cands = EmbeddingTable.from_rows(
            [f"w{i}" for i in range(30)], rng.standard_normal((30, 5))
        )
        neg = mine(cands, table, MiningConfig(m=5))
        hist = ClassHistogram(6)
        cfg = ScorerConfig()
        for x in rng.standard_normal((50, 5)):
            rec = score_sample(x / np.linalg.norm(x), table, neg, hist, cfg)
            assert 0.0 < rec.p0 <= 1.0
            assert 0.0 < rec.p1 <= 1.0
            assert 0.0 < rec.p2 <= 1.0
            assert rec.score > 0.0
        assert hist.total == 6 + 50

    def test_histogram_table_size_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            score_sample(H, table_with_sims([0.5, 0.1]), empty_neg(), ClassHistogram(3), ScorerConfig())

    def test_verdict_threshold(self):
        table = table_with_sims([0.9])
        cfg = ScorerConfig(tau=1.0, gamma=2.0)
        rec = score_sample(H, table, empty_neg(), ClassHistogram(1), cfg)
        assert rec.score == 1.0
        assert rec.verdict is Verdict.OOD


class TestScoreStream:
    @pytest.fixture()
    def setup(self):
        rng = np.random.default_rng(42)
        table = EmbeddingTable.from_rows(
            [f"c{i}" for i in range(7)], rng.standard_normal((7, 6))
        )
        cands = EmbeddingTable.from_rows(
            [f"w{i}" for i in range(40)], rng.standard_normal((40, 6))
        )
        neg = mine(cands, table, MiningConfig(m=8))
        stream = rng.standard_normal((600, 6))
        stream /= np.linalg.norm(stream, axis=1, keepdims=True)
        return table, neg, stream

    def test_matches_per_sample_path(self, setup):
        table, neg, stream = setup
        cfg = ScorerConfig(tau=0.05, gamma=1.0)
        h1, h2 = ClassHistogram(7), ClassHistogram(7)
        batched = score_stream(stream, table, neg, h1, cfg)
        singles = [score_sample(x, table, neg, h2, cfg) for x in stream]
        assert h1 == h2
        for a, b in zip(batched, singles):
            assert a.i_star == b.i_star
            assert a.verdict == b.verdict
            assert a.p0 == b.p0
            assert math.isclose(a.p1, b.p1, rel_tol=1e-12)
            assert math.isclose(a.p2, b.p2, rel_tol=1e-12)
            assert math.isclose(a.score, b.score, rel_tol=1e-12)

    def test_split_resume_is_bit_identical(self, setup):
        table, neg, stream = setup
        cfg = ScorerConfig()
        full_hist = ClassHistogram(7)
        full = score_stream(stream, table, neg, full_hist, cfg)
        for cut in (1, 2, 255, 256, 257, 300, 599):
            hist = ClassHistogram.restore(ClassHistogram(7).snapshot())
            part = score_stream(stream[:cut], table, neg, hist, cfg)
            resumed = ClassHistogram.restore(hist.snapshot())
            part += score_stream(stream[cut:], table, neg, resumed, cfg)
            assert part == full  # dataclass equality: every field bit-equal
            assert resumed == full_hist

    def test_histogram_conservation(self, setup):
        table, neg, stream = setup
        hist = ClassHistogram(7)
        score_stream(stream, table, neg, hist, ScorerConfig())
        assert hist.total == 7 + len(stream)
        assert sum(hist.snapshot()) == 7 + len(stream)

    def test_empty_stream(self, setup):
        table, neg, _ = setup
        hist = ClassHistogram(7)
        assert score_stream(np.empty((0, 6)), table, neg, hist, ScorerConfig()) == []
        assert hist.total == 7
