import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alkit.acquisition import (
    HIGHER,
    LOWER,
    CommitteePredictions,
    ScoredPool,
    bald,
    bald_scores,
    cog_sample,
    coreset_greedy,
    coverage_radius,
    entropy,
    least_confidence,
    max_entropy,
    max_entropy_scores,
    most_confident,
    random_sample,
    select_top_k,
    variance_ratio,
    variance_ratio_scores,
)
from alkit.views import PredictionTensor

from .conftest import make_embeddings, make_tensor, random_prob_tensor
from . import oracles


class TestSelectTopK:
    def test_higher_direction(self):
        scored = ScoredPool([0, 1, 2], [0.1, 0.9, 0.5], HIGHER)
        assert select_top_k(scored, 2).tolist() == [1, 2]

    def test_all_equal_ties_break_by_index(self):
        scored = ScoredPool([7, 3, 5, 1], [0.4, 0.4, 0.4, 0.4], HIGHER)
        assert select_top_k(scored, 3).tolist() == [1, 3, 5]

    def test_k_equals_pool(self):
        scored = ScoredPool([4, 2, 9], [1.0, 2.0, 3.0], LOWER)
        assert select_top_k(scored, 3).tolist() == [2, 4, 9]

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            select_top_k(ScoredPool([1], [0.0], HIGHER), 2)

    @given(st.integers(0, 2**31 - 1), st.integers(1, 12))
    @settings(max_examples=40, deadline=None)
    def test_monotone_transform_invariance(self, seed, n):
        rng = np.random.default_rng(seed)
        pool = np.sort(rng.choice(1000, size=n, replace=False))
        scores = rng.normal(size=n)
        k = int(rng.integers(1, n + 1))
        base = select_top_k(ScoredPool(pool, scores, HIGHER), k)
        warped = select_top_k(ScoredPool(pool, np.exp(scores) * 3 + 1, HIGHER), k)
        assert base.tolist() == warped.tolist()


class TestRandomSample:
    def test_k_equals_pool_returns_pool(self, rng):
        pool = np.array([3, 5, 8, 13])
        assert random_sample(pool, 4, rng).tolist() == [3, 5, 8, 13]

    def test_fixed_seed_identical(self):
        pool = np.arange(50)
        a = random_sample(pool, 10, np.random.default_rng(7))
        b = random_sample(pool, 10, np.random.default_rng(7))
        assert a.tolist() == b.tolist()

    def test_k_too_large(self, rng):
        with pytest.raises(ValueError):
            random_sample(np.arange(3), 4, rng)

    def test_inclusion_frequency_uniform(self):
        # Monte Carlo: each element's inclusion frequency ~ k/|U| within 3 sigma
        rng = np.random.default_rng(99)
        pool = np.arange(20)
        k, reps = 5, 10_000
        counts = np.zeros(len(pool))
        for _ in range(reps):
            counts[random_sample(pool, k, rng)] += 1
        p = k / len(pool)
        sigma = math.sqrt(p * (1 - p) / reps)
        assert np.all(np.abs(counts / reps - p) < 3.5 * sigma)


class TestLeastConfidence:
    def test_spec_rows(self):
        probs = make_tensor([[0.9, 0.1], [0.6, 0.4], [0.5, 0.5]])
        assert least_confidence(probs, 1).tolist() == [2]
        assert least_confidence(probs, 2).tolist() == [1, 2]

    def test_one_hot_ties(self):
        probs = make_tensor([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]], indices=[10, 11, 12])
        assert least_confidence(probs, 1).tolist() == [10]

    def test_rejects_multi_pass(self, rng):
        t = PredictionTensor(random_prob_tensor(rng, 3, 4, 2), np.arange(4))
        with pytest.raises(ValueError):
            least_confidence(t, 1)

    def test_most_confident_is_reverse_extreme(self):
        probs = make_tensor([[0.9, 0.1], [0.6, 0.4], [0.5, 0.5]])
        assert most_confident(probs, 1).tolist() == [0]


class TestMaxEntropy:
    def test_uniform_entropy_ln4(self):
        t = make_tensor([[0.25] * 4])
        assert max_entropy_scores(t).scores[0] == pytest.approx(math.log(4), abs=1e-12)

    def test_one_hot_entropy_zero(self):
        t = make_tensor([[1.0, 0.0, 0.0, 0.0]])
        assert max_entropy_scores(t).scores[0] == 0.0

    def test_uniform_beats_one_hot(self):
        t = make_tensor([[1.0, 0.0], [0.5, 0.5]], indices=[4, 9])
        assert max_entropy(t, 1).tolist() == [9]


class TestBald:
    def test_identical_passes_score_zero(self, rng):
        one = random_prob_tensor(rng, 1, 5, 3)
        t = PredictionTensor(np.repeat(one, 4, axis=0), np.arange(5))
        assert np.allclose(bald_scores(t).scores, 0.0)

    def test_max_disagreement_ln2(self):
        t = make_tensor(np.array([[[1.0, 0.0]], [[0.0, 1.0]]]))
        assert bald_scores(t).scores[0] == pytest.approx(math.log(2), abs=1e-9)

    def test_derived_two_pass_value(self):
        # computed with the independent entropy oracle and frozen
        t = make_tensor(np.array([[[0.8, 0.2]], [[0.6, 0.4]]]))
        expected = oracles.entropy_bf([0.7, 0.3]) - 0.5 * (
            oracles.entropy_bf([0.8, 0.2]) + oracles.entropy_bf([0.6, 0.4])
        )
        assert expected == pytest.approx(0.024157256781171, abs=1e-12)
        assert bald_scores(t).scores[0] == pytest.approx(expected, abs=1e-9)

    def test_single_pass_rejected(self, rng):
        t = PredictionTensor(random_prob_tensor(rng, 1, 3, 2), np.arange(3))
        with pytest.raises(ValueError):
            bald(t, 1)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_bald_bounded_by_max_entropy(self, seed):
        rng = np.random.default_rng(seed)
        t = PredictionTensor(random_prob_tensor(rng, 4, 6, 3), np.arange(6))
        b = bald_scores(t).scores
        h = max_entropy_scores(t).scores
        assert np.all(b >= 0)
        assert np.all(b <= h + 1e-12)


class TestCog:
    def test_hand_geometry(self):
        emb = make_embeddings([[1.0, 0.0], [-1.0, 0.0], [0.0, 3.0]])
        # centroid (0, 1); distances sqrt2, sqrt2, 2
        assert cog_sample(emb, np.arange(3), 1).tolist() == [2]

    def test_identical_embeddings_tie_break(self):
        emb = make_embeddings(np.ones((4, 3)), indices=[5, 2, 9, 7])
        assert cog_sample(emb, np.array([2, 5, 7, 9]), 2).tolist() == [2, 5]

    def test_translation_invariance(self, rng):
        vals = rng.normal(size=(8, 4))
        pool = np.arange(8)
        a = cog_sample(make_embeddings(vals), pool, 3)
        b = cog_sample(make_embeddings(vals + 13.7), pool, 3)
        assert a.tolist() == b.tolist()


class TestCoresetGreedy:
    def test_derived_three_point_pool(self):
        # L={(0,0)} idx 0; U={(1,0),(5,0),(6,0)} idx 1,2,3
        emb = make_embeddings([[0.0, 0.0], [1.0, 0.0], [5.0, 0.0], [6.0, 0.0]])
        got = coreset_greedy(emb, np.array([0]), np.array([1, 2, 3]), 2)
        oracle = oracles.coreset_bf(
            [0], [[0.0, 0.0]], [1, 2, 3], [[1.0, 0.0], [5.0, 0.0], [6.0, 0.0]], 2
        )
        assert oracle == [1, 3]
        assert got.tolist() == oracle

    def test_k1_farthest(self):
        emb = make_embeddings([[0.0], [1.0], [10.0]])
        assert coreset_greedy(emb, np.array([0]), np.array([1, 2]), 1).tolist() == [2]

    def test_pool_coincides_with_centers(self):
        emb = make_embeddings([[0.0], [0.0], [0.0], [0.0]], indices=[0, 5, 3, 8])
        got = coreset_greedy(emb, np.array([0]), np.array([3, 5, 8]), 2)
        assert got.tolist() == [3, 5]

    def test_empty_labeled_rejected(self):
        emb = make_embeddings([[0.0], [1.0]])
        with pytest.raises(ValueError):
            coreset_greedy(emb, np.array([]), np.array([0, 1]), 1)

    def test_coverage_radius_monotone(self, rng):
        vals = rng.normal(size=(12, 3))
        emb = make_embeddings(vals)
        labeled = np.array([0, 1])
        pool = np.arange(2, 12)
        radii = []
        for k in range(1, 6):
            sel = coreset_greedy(emb, labeled, pool, k)
            centers = np.concatenate([labeled, sel])
            radii.append(coverage_radius(emb, centers, pool))
        assert all(b <= a + 1e-12 for a, b in zip(radii, radii[1:]))


class TestVarianceRatio:
    def test_unanimous_zero(self):
        votes = CommitteePredictions(np.zeros((2, 5), dtype=int), np.arange(2))
        assert np.allclose(variance_ratio_scores(votes).scores, 0.0)

    def test_formula_value(self):
        votes = CommitteePredictions(np.array([[0, 0, 1, 2, 3]]), np.array([0]))
        assert variance_ratio_scores(votes).scores[0] == pytest.approx(0.6, abs=1e-12)

    def test_selects_highest_dispersion(self):
        votes = CommitteePredictions(
            np.array([[0, 0, 0, 0, 0], [0, 0, 1, 2, 3], [0, 0, 0, 1, 1]]),
            np.array([4, 5, 6]),
        )
        assert variance_ratio(votes, 1).tolist() == [5]

    def test_committee_of_one_rejected(self):
        with pytest.raises(ValueError):
            CommitteePredictions(np.zeros((2, 1), dtype=int), np.arange(2))


class TestOracleEquivalence:
    """Randomized small pools against the brute-force re-implementations."""

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_uc_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 9))
        pool = np.sort(rng.choice(100, size=n, replace=False))
        vals = random_prob_tensor(rng, 1, n, int(rng.integers(2, 6)))
        k = int(rng.integers(1, n + 1))
        got = least_confidence(PredictionTensor(vals, pool), k)
        assert got.tolist() == oracles.uc_bf(pool.tolist(), vals[0].tolist(), k)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_maxent_bald_match_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        n, t = int(rng.integers(1, 9)), int(rng.integers(2, 6))
        pool = np.sort(rng.choice(100, size=n, replace=False))
        vals = random_prob_tensor(rng, t, n, int(rng.integers(2, 5)))
        k = int(rng.integers(1, n + 1))
        tensor = PredictionTensor(vals, pool)
        assert max_entropy(tensor, k).tolist() == oracles.maxent_bf(
            pool.tolist(), vals.tolist(), k
        )
        assert bald(tensor, k).tolist() == oracles.bald_bf(pool.tolist(), vals.tolist(), k)
        assert np.allclose(
            bald_scores(tensor).scores, oracles.bald_scores_bf(vals.tolist()), atol=1e-9
        )

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_coreset_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        n_lab, n_pool = int(rng.integers(1, 4)), int(rng.integers(1, 8))
        vals = rng.normal(size=(n_lab + n_pool, 3)).round(3)  # rounded to force ties
        idx = np.sort(rng.choice(100, size=n_lab + n_pool, replace=False))
        labeled, pool = idx[:n_lab], idx[n_lab:]
        emb = make_embeddings(vals, indices=idx)
        k = int(rng.integers(1, n_pool + 1))
        got = coreset_greedy(emb, labeled, pool, k)
        oracle = oracles.coreset_bf(
            labeled.tolist(), vals[:n_lab].tolist(), pool.tolist(), vals[n_lab:].tolist(), k
        )
        assert got.tolist() == oracle
