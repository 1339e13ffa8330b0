"""Acquisition functions: pure scoring rules over model outputs.

Every sampler maps (views of the pool, budget k) to exactly k unlabeled
indices, sorted ascending, with ties broken by ascending dataset index.
None of them ever sees a label of the unlabeled pool.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .views import EmbeddingMatrix, PredictionTensor

HIGHER = "higher-is-selected"
LOWER = "lower-is-selected"


@dataclass
class ScoredPool:
    """Uniform carrier for score-based selection rules."""

    pool_indices: np.ndarray
    scores: np.ndarray
    direction: str  # HIGHER or LOWER

    def __post_init__(self):
        self.pool_indices = np.asarray(self.pool_indices, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if len(self.pool_indices) != len(self.scores):
            raise ValueError("pool_indices and scores lengths differ")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")
        if self.direction not in (HIGHER, LOWER):
            raise ValueError(f"unknown direction {self.direction!r}")


@dataclass
class CommitteePredictions:
    """Predicted class per committee member: class_votes[N, M]."""

    class_votes: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        self.class_votes = np.asarray(self.class_votes, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.class_votes.ndim != 2:
            raise ValueError("class_votes must be [N, M]")
        if self.class_votes.shape[0] != len(self.indices):
            raise ValueError("vote rows do not match index count")
        if self.class_votes.shape[1] < 2:
            raise ValueError("committee needs at least 2 members")
        if np.any(self.class_votes < 0):
            raise ValueError("votes must be non-negative class indices")


def _check_selection(selected: np.ndarray, pool: np.ndarray, k: int) -> np.ndarray:
    selected = np.asarray(selected, dtype=np.int64)
    assert len(selected) == k, "selection size != k"
    assert np.all(np.diff(selected) > 0) if len(selected) > 1 else True, "selection not sorted unique"
    assert np.isin(selected, pool).all(), "selection escaped the pool"
    return selected


def select_top_k(scored: ScoredPool, k: int) -> np.ndarray:
    """k extremal indices in the stated direction; ties to ascending index."""
    pool = scored.pool_indices
    if k > len(pool):
        raise ValueError(f"k={k} exceeds pool size {len(pool)}")
    primary = -scored.scores if scored.direction == HIGHER else scored.scores
    order = np.lexsort((pool, primary))  # primary asc, then dataset index asc
    return _check_selection(np.sort(pool[order[:k]]), pool, k)


def random_sample(pool: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw without replacement (the random sampling baseline)."""
    pool = np.asarray(pool, dtype=np.int64)
    if k > len(pool):
        raise ValueError(f"k={k} exceeds pool size {len(pool)}")
    return _check_selection(np.sort(rng.choice(pool, size=k, replace=False)), pool, k)


def entropy(p: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats along the last axis, with 0*ln(0) = 0."""
    p = np.asarray(p, dtype=np.float64)
    return -np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0), axis=-1)


def least_confidence_scores(probs: PredictionTensor) -> ScoredPool:
    """Max softmax probability per sample; low confidence is selected."""
    if probs.num_passes != 1:
        raise ValueError("least_confidence expects a single-pass tensor (S=1)")
    return ScoredPool(probs.indices, probs.values[0].max(axis=1), LOWER)


def least_confidence(probs: PredictionTensor, k: int) -> np.ndarray:
    return select_top_k(least_confidence_scores(probs), k)


def most_confident(probs: PredictionTensor, k: int) -> np.ndarray:
    """Debug/ablation variant: descending max-probability selection."""
    if probs.num_passes != 1:
        raise ValueError("most_confident expects a single-pass tensor (S=1)")
    return select_top_k(ScoredPool(probs.indices, probs.values[0].max(axis=1), HIGHER), k)


def max_entropy_scores(mc: PredictionTensor) -> ScoredPool:
    """Entropy of the pass-averaged posterior; high entropy is selected."""
    p_bar = mc.values.mean(axis=0)
    return ScoredPool(mc.indices, entropy(p_bar), HIGHER)


def max_entropy(mc: PredictionTensor, k: int) -> np.ndarray:
    return select_top_k(max_entropy_scores(mc), k)


def bald_scores(mc: PredictionTensor) -> ScoredPool:
    """Mutual information H[mean_t p_t] - mean_t H[p_t]; disagreement is selected."""
    if mc.num_passes < 2:
        raise ValueError("bald requires at least 2 stochastic passes (T >= 2)")
    total = entropy(mc.values.mean(axis=0))
    expected = entropy(mc.values).mean(axis=0)
    scores = total - expected
    # concavity guarantees >= 0 up to float error; clamp the dust
    scores = np.where((scores < 0) & (scores >= -1e-9), 0.0, scores)
    if np.any(scores < 0):
        raise AssertionError("BALD score negative beyond numerical tolerance")
    return ScoredPool(mc.indices, scores, HIGHER)


def bald(mc: PredictionTensor, k: int) -> np.ndarray:
    return select_top_k(bald_scores(mc), k)


def cog_scores(embeddings: EmbeddingMatrix, pool: np.ndarray) -> ScoredPool:
    """Distance from the centroid of all labeled+unlabeled embeddings."""
    if len(embeddings.indices) == 0:
        raise ValueError("cannot compute a centroid over an empty embedding set")
    pool = np.asarray(pool, dtype=np.int64)
    cog = embeddings.values.mean(axis=0)
    dists = np.linalg.norm(embeddings.rows_for(pool) - cog, axis=1)
    return ScoredPool(pool, dists, HIGHER)


def cog_sample(embeddings: EmbeddingMatrix, pool: np.ndarray, k: int) -> np.ndarray:
    return select_top_k(cog_scores(embeddings, pool), k)


def _min_dists_to_centers(pool_emb: np.ndarray, center_emb: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Per-pool-point distance to the nearest center, chunked over centers."""
    min_d = np.full(len(pool_emb), np.inf)
    for lo in range(0, len(center_emb), chunk):
        block = center_emb[lo : lo + chunk]
        # (u - c)^2 = |u|^2 - 2 u.c + |c|^2, clipped against float cancellation
        d2 = (
            np.sum(pool_emb**2, axis=1)[:, None]
            - 2.0 * pool_emb @ block.T
            + np.sum(block**2, axis=1)[None, :]
        )
        np.minimum(min_d, np.sqrt(np.clip(d2.min(axis=1), 0.0, None)), out=min_d)
    return min_d


def coreset_greedy(
    embeddings: EmbeddingMatrix,
    labeled: np.ndarray,
    pool: np.ndarray,
    k: int,
) -> np.ndarray:
    """k-center greedy: repeatedly add the pool point farthest from any center.

    Centers start as the labeled set; ties go to the lowest dataset index.
    """
    labeled = np.asarray(labeled, dtype=np.int64)
    pool = np.asarray(pool, dtype=np.int64)
    if len(labeled) == 0:
        raise ValueError("coreset_greedy needs a non-empty labeled set as initial centers")
    if k > len(pool):
        raise ValueError(f"k={k} exceeds pool size {len(pool)}")
    pool_emb = embeddings.rows_for(pool)
    min_dist = _min_dists_to_centers(pool_emb, embeddings.rows_for(labeled))
    taken = np.zeros(len(pool), dtype=bool)
    picked = []
    for _ in range(k):
        masked = np.where(taken, -np.inf, min_dist)
        best = masked.max()
        candidates = np.flatnonzero(masked == best)
        pos = candidates[np.argmin(pool[candidates])]
        taken[pos] = True
        picked.append(int(pool[pos]))
        new_d = np.linalg.norm(pool_emb - pool_emb[pos], axis=1)
        np.minimum(min_dist, new_d, out=min_dist)
    return _check_selection(np.sort(np.asarray(picked, dtype=np.int64)), pool, k)


def coverage_radius(
    embeddings: EmbeddingMatrix, centers: np.ndarray, pool: np.ndarray
) -> float:
    """max over the pool of the distance to the nearest center."""
    d = _min_dists_to_centers(embeddings.rows_for(pool), embeddings.rows_for(centers))
    return float(d.max()) if len(d) else 0.0


def variance_ratio_scores(votes: CommitteePredictions) -> ScoredPool:
    """v = 1 - f_m/M with f_m the modal vote count; dispersion is selected."""
    m = votes.class_votes.shape[1]
    f_m = np.array(
        [np.bincount(row).max() for row in votes.class_votes], dtype=np.float64
    )
    return ScoredPool(votes.indices, 1.0 - f_m / m, HIGHER)


def variance_ratio(votes: CommitteePredictions, k: int) -> np.ndarray:
    return select_top_k(variance_ratio_scores(votes), k)
