import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from aram.dists import (
    PROB_FLOOR,
    LogitVector,
    ProbVector,
    context_score,
    dv_bound,
    entropy,
    jensen_shannon_divergence,
    kl_divergence,
    normalize_logits,
    tilted_distribution,
)
from aram.errors import InvalidInputError

PC = ProbVector(np.array(oracles.PC))
PP = ProbVector(np.array(oracles.PP))


def dist_strategy(min_size=2, max_size=16):
    return (
        st.lists(st.floats(0.001, 100.0), min_size=min_size, max_size=max_size)
        .map(lambda ws: ProbVector(np.array(ws) / np.sum(ws)))
    )


def pair_strategy():
    return st.integers(2, 16).flatmap(
        lambda v: st.tuples(
            st.lists(st.floats(0.001, 100.0), min_size=v, max_size=v),
            st.lists(st.floats(0.001, 100.0), min_size=v, max_size=v),
        ).map(
            lambda ws: (
                ProbVector(np.array(ws[0]) / np.sum(ws[0])),
                ProbVector(np.array(ws[1]) / np.sum(ws[1])),
            )
        )
    )


class TestProbVector:
    def test_rejects_negative_entries(self):
        with pytest.raises(InvalidInputError):
            ProbVector(np.array([0.5, 0.6, -0.1]))

    def test_rejects_bad_sum(self):
        with pytest.raises(InvalidInputError):
            ProbVector(np.array([0.5, 0.6]))

    def test_rejects_single_entry(self):
        with pytest.raises(InvalidInputError):
            ProbVector(np.array([1.0]))

    def test_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            ProbVector(np.array([np.nan, 1.0]))

    def test_floored_respects_floor_and_normalization(self):
        p = ProbVector(np.array([1.0, 0.0, 0.0])).floored()
        assert p.probs.min() >= PROB_FLOOR * 0.999
        assert math.isclose(p.probs.sum(), 1.0, abs_tol=1e-12)

    def test_logit_vector_rejects_infinity(self):
        with pytest.raises(InvalidInputError):
            LogitVector(np.array([0.0, np.inf]))


class TestNormalizeLogits:
    def test_frozen_softmax(self):
        got = normalize_logits(LogitVector(np.array([1.0, 2.0, 3.0]))).probs
        np.testing.assert_allclose(got, oracles.SOFTMAX_123, atol=1e-12, rtol=0)

    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=16), st.floats(-100, 100))
    def test_shift_invariance(self, logits, shift):
        base = normalize_logits(LogitVector(np.array(logits))).probs
        shifted = normalize_logits(LogitVector(np.array(logits) + shift)).probs
        np.testing.assert_allclose(base, shifted, atol=1e-9, rtol=0)

    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=16))
    def test_sums_to_one(self, logits):
        probs = normalize_logits(LogitVector(np.array(logits))).probs
        assert math.isclose(probs.sum(), 1.0, abs_tol=1e-9)


class TestKlDivergence:
    def test_frozen_value(self):
        assert kl_divergence(PC, PP) == pytest.approx(oracles.KL_PC_PP, abs=1e-12)

    def test_frozen_onehot_vs_uniform(self):
        onehot = ProbVector(np.array([1.0, 0.0, 0.0]))
        uniform = ProbVector(np.ones(3) / 3)
        assert kl_divergence(onehot, uniform) == pytest.approx(
            oracles.KL_ONEHOT_UNIF3, abs=1e-12
        )

    def test_zero_on_equal(self):
        assert kl_divergence(PC, PC) == 0.0

    def test_vocab_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            kl_divergence(PC, ProbVector(np.array([0.5, 0.5])))

    @settings(max_examples=200)
    @given(pair_strategy())
    def test_nonnegative(self, pair):
        p, q = pair
        assert kl_divergence(p, q) >= -1e-12

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_mpmath_oracle(self, seed):
        from conftest import random_pair

        p, q = random_pair(seed, vocab_size=8)
        want = float(oracles.kl(list(p.probs), list(q.probs)))
        assert kl_divergence(p, q) == pytest.approx(want, abs=1e-12)


class TestEntropy:
    def test_frozen_value(self):
        assert entropy(PC) == pytest.approx(oracles.ENTROPY_PC, abs=1e-12)

    def test_onehot_exactly_zero(self):
        # No flooring inside entropy: the 0 ln 0 = 0 convention applies.
        assert entropy(ProbVector(np.array([1.0, 0.0, 0.0]))) == 0.0

    def test_uniform_is_log_v(self):
        assert entropy(ProbVector(np.ones(4) / 4)) == pytest.approx(math.log(4), abs=1e-12)

    @settings(max_examples=100)
    @given(dist_strategy())
    def test_bounds(self, p):
        h = entropy(p)
        assert -1e-12 <= h <= math.log(p.vocab_size) + 1e-9


class TestContextScore:
    def test_frozen_scores(self):
        s = context_score(PC, PP)
        np.testing.assert_allclose(s.scores, oracles.SCORES_PC_PP, atol=1e-12, rtol=0)
        assert s.finite_mask.all()

    def test_floored_entries_flagged(self):
        s = context_score(ProbVector(np.array([1.0, 0.0, 0.0])), ProbVector(np.ones(3) / 3))
        assert list(s.finite_mask) == [True, False, False]

    def test_antisymmetry(self):
        forward = context_score(PC, PP).scores
        backward = context_score(PP, PC).scores
        np.testing.assert_allclose(forward, -backward, atol=1e-12, rtol=0)


class TestTiltedDistribution:
    def test_frozen_half_tilt(self):
        s = context_score(PC, PP)
        p_lam, log_z = tilted_distribution(PP, s, 0.5)
        np.testing.assert_allclose(p_lam.probs, oracles.TILTED_HALF, atol=1e-12, rtol=0)
        assert log_z == pytest.approx(oracles.TILTED_HALF_LOGZ, abs=1e-12)

    def test_lambda_zero_returns_prior(self):
        s = context_score(PC, PP)
        p_lam, log_z = tilted_distribution(PP, s, 0.0)
        np.testing.assert_allclose(p_lam.probs, PP.floored().probs, atol=1e-15, rtol=0)
        assert abs(log_z) < 1e-15

    def test_lambda_one_returns_cond(self):
        s = context_score(PC, PP)
        p_lam, log_z = tilted_distribution(PP, s, 1.0)
        np.testing.assert_allclose(p_lam.probs, PC.floored().probs, atol=1e-12, rtol=0)
        assert abs(log_z) < 1e-12

    def test_rejects_nonfinite_lambda(self):
        s = context_score(PC, PP)
        with pytest.raises(InvalidInputError):
            tilted_distribution(PP, s, float("nan"))

    def test_extreme_lambda_does_not_overflow(self):
        s = context_score(PC, PP)
        p_lam, log_z = tilted_distribution(PP, s, 500.0)
        assert np.isfinite(p_lam.probs).all()
        assert np.isfinite(log_z)


class TestDvBound:
    def test_frozen_half(self):
        assert dv_bound(PC, PP, 0.5) == pytest.approx(oracles.DV_HALF, abs=1e-12)

    def test_zero_at_lambda_zero(self):
        assert abs(dv_bound(PC, PP, 0.0)) < 1e-12

    def test_equals_kl_at_lambda_one(self):
        assert dv_bound(PC, PP, 1.0) == pytest.approx(kl_divergence(PC, PP), abs=1e-9)

    def test_interior_value_strictly_between(self):
        value = dv_bound(PC, PP, 0.5)
        assert 0.0 < value < oracles.KL_PC_PP

    @settings(max_examples=200)
    @given(pair_strategy(), st.floats(-3, 3))
    def test_never_exceeds_kl(self, pair, lam):
        p_cond, p_prior = pair
        assert dv_bound(p_cond, p_prior, lam) <= kl_divergence(p_cond, p_prior) + 1e-9

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("lam", [-1.0, 0.3, 0.5, 2.0])
    def test_matches_mpmath_oracle(self, seed, lam):
        from conftest import random_pair

        p, q = random_pair(seed, vocab_size=6)
        want = float(oracles.dv_bound(list(p.probs), list(q.probs), lam))
        assert dv_bound(p, q, lam) == pytest.approx(want, abs=1e-11)


class TestJensenShannon:
    def test_frozen_value(self):
        assert jensen_shannon_divergence(PC, PP) == pytest.approx(
            oracles.JSD_PC_PP, abs=1e-12
        )

    def test_zero_on_equal(self):
        assert jensen_shannon_divergence(PC, PC) == pytest.approx(0.0, abs=1e-12)

    def test_disjoint_onehots_near_ln2(self):
        a = ProbVector(np.array([1.0, 0.0]))
        b = ProbVector(np.array([0.0, 1.0]))
        got = jensen_shannon_divergence(a, b)
        assert got == pytest.approx(oracles.JSD_DISJOINT_ONEHOTS, abs=1e-12)
        assert abs(got - math.log(2)) < 1e-4

    @settings(max_examples=200)
    @given(pair_strategy())
    def test_bounded_and_symmetric(self, pair):
        p, q = pair
        forward = jensen_shannon_divergence(p, q)
        backward = jensen_shannon_divergence(q, p)
        assert -1e-12 <= forward <= math.log(2) + 1e-9
        assert forward == pytest.approx(backward, abs=1e-12)
