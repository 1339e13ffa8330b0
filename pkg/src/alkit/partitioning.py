"""Dataset partitioning: splits, initial labeled folds, long-tailed pools."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class PartitionState:
    """Disjoint train/val/test cover plus the labeled/unlabeled split of train.

    This is the ground truth of "who is annotated"; orchestration re-checks
    its invariants after every annotation step.
    """

    train_indices: np.ndarray
    val_indices: np.ndarray
    test_indices: np.ndarray
    labeled: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    unlabeled: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        for name in ("train_indices", "val_indices", "test_indices", "labeled", "unlabeled"):
            setattr(self, name, np.sort(np.asarray(getattr(self, name), dtype=np.int64)))

    def check_invariants(self) -> None:
        train = set(self.train_indices.tolist())
        val = set(self.val_indices.tolist())
        test = set(self.test_indices.tolist())
        lab = set(self.labeled.tolist())
        unlab = set(self.unlabeled.tolist())
        if train & val or train & test or val & test:
            raise AssertionError("train/val/test are not pairwise disjoint")
        if lab & unlab:
            raise AssertionError("labeled and unlabeled overlap")
        if lab | unlab != train:
            raise AssertionError("labeled ∪ unlabeled does not cover the train pool")
        if len(self.labeled) != len(lab) or len(self.unlabeled) != len(unlab):
            raise AssertionError("duplicate indices inside labeled/unlabeled")

    def with_initial_labels(self, labeled: np.ndarray) -> "PartitionState":
        labeled = np.sort(np.asarray(labeled, dtype=np.int64))
        unlabeled = np.setdiff1d(self.train_indices, labeled)
        state = PartitionState(
            self.train_indices, self.val_indices, self.test_indices, labeled, unlabeled
        )
        state.check_invariants()
        return state

    def annotate(self, new_indices: np.ndarray) -> "PartitionState":
        """Move ``new_indices`` from the unlabeled pool into the labeled set."""
        new = np.asarray(new_indices, dtype=np.int64)
        if len(np.intersect1d(new, self.unlabeled)) != len(new):
            raise ValueError("annotated indices must come from the unlabeled pool")
        state = PartitionState(
            self.train_indices,
            self.val_indices,
            self.test_indices,
            np.union1d(self.labeled, new),
            np.setdiff1d(self.unlabeled, new),
        )
        state.check_invariants()
        return state


def split_dataset(
    n_total: int,
    val_fraction: float,
    test_spec,
    rng: np.random.Generator,
) -> PartitionState:
    """Split ``range(n_total)`` into train/val/test.

    ``test_spec`` is either a fraction of the whole dataset or an explicit
    index array for datasets that ship a test split.  ``val_fraction`` is
    measured against the non-test pool, the same base that labeled
    fractions and budgets use.  The returned state has an empty labeled
    set (train == unlabeled).
    """
    if val_fraction >= 1.0:
        raise ValueError("val_fraction must be < 1")
    if isinstance(test_spec, (int, float)) and not isinstance(test_spec, bool):
        test_fraction = float(test_spec)
        if test_fraction >= 1.0:
            raise ValueError("test fraction must be < 1")
        perm = rng.permutation(n_total)
        n_test = int(round(test_fraction * n_total))
        n_val = int(round(val_fraction * (n_total - n_test)))
        test = perm[:n_test]
        val = perm[n_test : n_test + n_val]
        train = perm[n_test + n_val :]
    else:
        test = np.asarray(test_spec, dtype=np.int64)
        remaining = np.setdiff1d(np.arange(n_total, dtype=np.int64), test)
        perm = remaining[rng.permutation(len(remaining))]
        n_val = int(round(val_fraction * len(remaining)))
        if n_val >= len(remaining):
            raise ValueError("val_fraction leaves no training data")
        val = perm[:n_val]
        train = perm[n_val:]
    state = PartitionState(train, val, test, labeled=[], unlabeled=train)
    state.check_invariants()
    return state


def draw_initial_folds(
    train_indices: np.ndarray,
    fold_count: int,
    fold_size: int,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """Independently drawn initial labeled sets L0..L(fold_count-1).

    Folds are drawn independently and may overlap each other, but each
    fold holds unique indices: a duplicate sample inside one labeled set
    would corrupt the labeled-count arithmetic of the AL loop.
    """
    train_indices = np.asarray(train_indices, dtype=np.int64)
    if fold_size > len(train_indices):
        raise ValueError(
            f"fold_size {fold_size} exceeds train pool size {len(train_indices)}"
        )
    return [
        np.sort(rng.choice(train_indices, size=fold_size, replace=False))
        for _ in range(fold_count)
    ]


@dataclass(frozen=True)
class ImbalanceProfile:
    """Normalized long-tailed class distribution a + b*exp(alpha*x), x = i + 0.5."""

    class_probabilities: np.ndarray
    a: float
    b: float
    alpha: float

    def __post_init__(self):
        p = self.class_probabilities
        if abs(float(p.sum()) - 1.0) > 1e-12:
            raise ValueError("class probabilities must sum to 1")
        if np.any(p < 0):
            raise ValueError("class probabilities must be non-negative")


def imbalance_profile(C: int, a: float = 100.0, b: float = 400.0, alpha: float = -0.046) -> ImbalanceProfile:
    """Power-law class profile; raw count for class i (1-based) is a + b*exp(alpha*(i+0.5))."""
    if C < 1:
        raise ValueError("C must be >= 1")
    i = np.arange(1, C + 1, dtype=np.float64)
    raw = a + b * np.exp(alpha * (i + 0.5))
    probs = raw / raw.sum()
    return ImbalanceProfile(class_probabilities=probs, a=a, b=b, alpha=alpha)


def raw_class_counts(profile: ImbalanceProfile, C: int) -> np.ndarray:
    """Unnormalized counts of the profile's closed form, for audit."""
    i = np.arange(1, C + 1, dtype=np.float64)
    return profile.a + profile.b * np.exp(profile.alpha * (i + 0.5))


def max_exhaustion_free_total(labels: np.ndarray, profile: ImbalanceProfile) -> int:
    """Largest total for which no class's quota exceeds its available samples."""
    probs = profile.class_probabilities
    totals = []
    for c, p in enumerate(probs):
        avail = int(np.sum(labels == c))
        if p > 0:
            totals.append(int(math.floor(avail / p)))
    return min(totals) if totals else 0


def sample_imbalanced(
    labels_by_index: np.ndarray,
    candidate_indices: np.ndarray,
    profile: ImbalanceProfile,
    total_size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw ``total_size`` indices with per-class quotas proportional to the profile.

    Sampling is without replacement within each class.  If a class's quota
    exceeds its available samples, the shortfall is redistributed over the
    remaining classes (renormalized), and the fallback is logged.
    """
    candidate_indices = np.asarray(candidate_indices, dtype=np.int64)
    labels = np.asarray(labels_by_index)[candidate_indices]
    if total_size > len(candidate_indices):
        raise ValueError(
            f"total_size {total_size} exceeds candidate pool {len(candidate_indices)}"
        )
    C = len(profile.class_probabilities)
    by_class = {c: candidate_indices[labels == c] for c in range(C)}
    for c in range(C):
        if profile.class_probabilities[c] > 0 and len(by_class[c]) == 0:
            raise ValueError(f"class {c} has no available samples")

    # largest-remainder apportionment of quotas, then exhaustion fallback
    probs = profile.class_probabilities.copy()
    quotas = np.zeros(C, dtype=np.int64)
    remaining = total_size
    active = np.ones(C, dtype=bool)
    while remaining > 0:
        p = np.where(active, probs, 0.0)
        if p.sum() == 0:
            raise ValueError("all classes exhausted before filling total_size")
        p = p / p.sum()
        ideal = p * remaining
        add = np.floor(ideal).astype(np.int64)
        shortfall = remaining - int(add.sum())
        if shortfall > 0:
            order = np.argsort(-(ideal - add), kind="stable")
            add[order[:shortfall]] += 1
        overflow = False
        for c in range(C):
            cap = len(by_class[c]) - quotas[c]
            if add[c] > cap:
                add[c] = cap
                active[c] = False
                overflow = True
        quotas += add
        remaining = total_size - int(quotas.sum())
        if overflow and remaining > 0:
            log.warning(
                "imbalanced sampling: class quota exceeded availability, "
                "renormalizing %d leftover draws over remaining classes",
                remaining,
            )

    picked = [
        rng.choice(by_class[c], size=int(quotas[c]), replace=False)
        for c in range(C)
        if quotas[c] > 0
    ]
    return np.sort(np.concatenate(picked)) if picked else np.empty(0, dtype=np.int64)
