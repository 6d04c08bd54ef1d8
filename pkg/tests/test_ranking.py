import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasesketch.ranking import (
    CandidateRejected,
    CandidateScores,
    MetricTriple,
    SimilarityMatrix,
    filter_candidates,
    phi,
    rank_components,
    rank_score,
    semantic_concealment,
    structural_concealment,
)


def two_phase(clip, ir, hps):
    """(p1, p2, delta) values per metric -> CandidateScores."""
    return CandidateScores(
        phase=(
            MetricTriple(clip[0], ir[0], hps[0]),
            MetricTriple(clip[1], ir[1], hps[1]),
        ),
        delta=(MetricTriple(clip[2], ir[2], hps[2]),),
    )


class TestRankScore:
    def test_symmetric_trivial_case(self):
        sc = two_phase(clip=(10, 10, 10), ir=(0, 0, 0), hps=(0.5, 0.5, 0.5))
        s_clip, s_ir, s_hps = rank_components(sc)
        assert s_clip == pytest.approx(1.0, abs=1e-12)
        assert s_ir == pytest.approx(0.25, abs=1e-12)  # phi(0) = 0.5
        assert s_hps == pytest.approx(0.25, abs=1e-12)

    def test_clip_hand_case(self):
        sc = two_phase(clip=(30, 30, 20), ir=(0, 0, 0), hps=(0, 0, 0))
        s_clip, _, _ = rank_components(sc)
        assert s_clip == pytest.approx(2.25, abs=1e-12)  # 900 / 400

    def test_hps_hand_case(self):
        sc = two_phase(clip=(1, 1, 1), ir=(0, 0, 0), hps=(0.3, 0.4, 0.2))
        _, _, s_hps = rank_components(sc)
        assert s_hps == pytest.approx(0.21, abs=1e-12)

    def test_zero_clip_delta_rejected(self):
        sc = two_phase(clip=(30, 30, 0), ir=(0, 0, 0), hps=(0, 0, 0))
        with pytest.raises(CandidateRejected, match="undefined-ratio"):
            rank_score(sc)

    @settings(max_examples=50, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        scale=st.floats(0.01, 100.0),
        k=st.integers(2, 5),
    )
    def test_clip_scale_invariance(self, seed, scale, k):
        r = np.random.default_rng(seed)
        phase = tuple(
            MetricTriple(r.uniform(5, 40), r.normal(), r.uniform(0, 1))
            for _ in range(k)
        )
        delta = tuple(
            MetricTriple(r.uniform(5, 40), r.normal(), r.uniform(0, 1))
            for _ in range(k - 1)
        )
        sc = CandidateScores(phase, delta)
        scaled = CandidateScores(
            tuple(MetricTriple(t.clip * scale, t.ir, t.hps) for t in phase),
            tuple(MetricTriple(t.clip * scale, t.ir, t.hps) for t in delta),
        )
        base = rank_components(sc)[0]
        assert rank_components(scaled)[0] == pytest.approx(base, rel=1e-9)

    def test_score_shapes_validated(self):
        with pytest.raises(ValueError):
            CandidateScores(
                (MetricTriple(1, 0, 0), MetricTriple(1, 0, 0)),
                (),
            )
        with pytest.raises(ValueError):
            CandidateScores(
                (MetricTriple(1, 0, 0), MetricTriple(float("nan"), 0, 0)),
                (MetricTriple(1, 0, 0),),
            )


class TestPhi:
    def test_matches_high_precision_erf(self):
        mpmath.mp.dps = 40
        for x in np.linspace(-6, 6, 241):
            exact = float(0.5 * (1 + mpmath.erf(mpmath.mpf(x) / mpmath.sqrt(2))))
            assert abs(phi(float(x)) - exact) <= 1e-10

    def test_symmetry(self):
        assert phi(0.0) == 0.5
        assert phi(1.3) + phi(-1.3) == pytest.approx(1.0, abs=1e-15)


class TestStructuralConcealment:
    def test_equal_scores_give_zero(self):
        assert structural_concealment(27.4, 27.4) == 0.0

    def test_hand_case(self):
        assert structural_concealment(29.9, 28.2) == pytest.approx(1.7, abs=1e-12)

    def test_antisymmetry(self, rng):
        for _ in range(20):
            a, b = rng.normal(size=2)
            assert structural_concealment(a, b) == -structural_concealment(b, a)


class TestSemanticConcealment:
    def test_indifferent_matrix_gives_one(self):
        sim = SimilarityMatrix(np.full((2, 2), 3.7), tau=1.0)
        assert semantic_concealment(sim) == pytest.approx(1.0, abs=1e-12)

    def test_strong_diagonal_approaches_k(self):
        sim = SimilarityMatrix(np.array([[10.0, -10.0], [-10.0, 10.0]]), tau=1.0)
        expect = 2.0 / (1.0 + math.exp(-20.0))
        assert semantic_concealment(sim) == pytest.approx(expect, abs=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 6))
    def test_bounds(self, seed, k):
        r = np.random.default_rng(seed)
        sim = SimilarityMatrix(r.normal(0, 5, (k, k)), tau=0.07)
        val = semantic_concealment(sim)
        assert 0.0 < val <= k

    def test_row_shift_invariance(self, rng):
        s = rng.normal(0, 2, (3, 3))
        shifted = s + rng.normal(0, 5, (3, 1))  # constant per row
        a = semantic_concealment(SimilarityMatrix(s, tau=0.5))
        b = semantic_concealment(SimilarityMatrix(shifted, tau=0.5))
        assert a == pytest.approx(b, rel=1e-12)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            SimilarityMatrix(np.zeros((2, 3)))

    def test_tau_positive(self):
        with pytest.raises(ValueError):
            SimilarityMatrix(np.zeros((2, 2)), tau=0.0)


class TestFilterCandidates:
    def make(self, clip2):
        return two_phase(clip=(26.0, clip2, 20.0), ir=(0.5, 0.5, 0.1), hps=(0.3, 0.3, 0.1))

    def test_open_thresholds_keep_all(self):
        cands = [self.make(30), self.make(10)]
        t = MetricTriple(-math.inf, -math.inf, -math.inf)
        assert filter_candidates(cands, t) == cands

    def test_impossible_thresholds_drop_all(self):
        cands = [self.make(30), self.make(10)]
        t = MetricTriple(math.inf, math.inf, math.inf)
        assert filter_candidates(cands, t) == []

    def test_single_phase_below_threshold_excludes(self):
        keep = self.make(30)
        drop = self.make(21)  # phase-2 CLIP below 25
        t = MetricTriple(25.0, 0.0, 0.0)
        assert filter_candidates([keep, drop], t) == [keep]

    def test_order_preserved(self):
        cands = [self.make(30), self.make(28), self.make(29)]
        t = MetricTriple(25.0, 0.0, 0.0)
        assert filter_candidates(cands, t) == cands
