"""Aggregation and significance testing of finished runs.

Accuracy curves are means with unbiased standard deviations over the
seed x fold repetitions.  Whether strategies differ is settled with a
one-way analysis of variance followed by Tukey-Kramer pairwise
comparisons (studentized-range distribution, exact for unequal group
sizes), controlling the family-wise error rate at the chosen alpha.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .persistence import RESULTS_COLUMNS


@dataclass
class MethodGroup:
    """One strategy's replicate measurements of a single metric."""

    name: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or len(self.values) < 2:
            raise ValueError(f"group {self.name!r} needs >= 2 replicate values")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"group {self.name!r} has non-finite values")


@dataclass
class AnovaResult:
    f_statistic: float
    p_value: float
    df_between: int
    df_within: int
    mse: float
    group_means: dict[str, float]


@dataclass
class PairwiseComparison:
    a: str
    b: str
    mean_difference: float  # mean(b) - mean(a)
    q_statistic: float
    p_value: float
    reject: bool


@dataclass
class SignificanceReport:
    alpha: float
    anova: AnovaResult
    pairwise: list[PairwiseComparison] = field(default_factory=list)

    def rejected_pairs(self) -> list[tuple[str, str]]:
        return [(c.a, c.b) for c in self.pairwise if c.reject]


def one_way_anova(groups: list[MethodGroup]) -> AnovaResult:
    """Classic F test of equal group means; also returns the pooled MSE
    that the pairwise comparisons reuse."""
    if len(groups) < 2:
        raise ValueError("need at least 2 groups")
    names = [g.name for g in groups]
    if len(set(names)) != len(names):
        raise ValueError("group names must be unique")
    all_values = np.concatenate([g.values for g in groups])
    grand = all_values.mean()
    k = len(groups)
    n_total = len(all_values)
    ss_between = sum(len(g.values) * (g.values.mean() - grand) ** 2 for g in groups)
    ss_within = sum(((g.values - g.values.mean()) ** 2).sum() for g in groups)
    df_between = k - 1
    df_within = n_total - k
    if df_within < 1:
        raise ValueError("not enough replicates for a within-group variance")
    ms_between = ss_between / df_between
    mse = ss_within / df_within
    if mse == 0:
        f = math.inf if ms_between > 0 else 0.0
        p = 0.0 if ms_between > 0 else 1.0
    else:
        f = ms_between / mse
        p = float(stats.f.sf(f, df_between, df_within))
    return AnovaResult(
        f_statistic=float(f),
        p_value=p,
        df_between=df_between,
        df_within=df_within,
        mse=float(mse),
        group_means={g.name: float(g.values.mean()) for g in groups},
    )


def tukey_kramer(groups: list[MethodGroup], alpha: float = 0.05) -> SignificanceReport:
    """All-pairs comparison holding the family-wise error rate at alpha.

    Uses the studentized-range distribution with the Kramer adjustment
    sqrt(MSE/2 * (1/n_i + 1/n_j)) so unequal group sizes are exact.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    anova = one_way_anova(groups)
    k = len(groups)
    pairwise = []
    for i in range(k):
        for j in range(i + 1, k):
            gi, gj = groups[i], groups[j]
            diff = float(gj.values.mean() - gi.values.mean())
            se = math.sqrt(anova.mse / 2.0 * (1.0 / len(gi.values) + 1.0 / len(gj.values)))
            if se == 0:
                q = math.inf if diff != 0 else 0.0
                p = 0.0 if diff != 0 else 1.0
            else:
                q = abs(diff) / se
                p = float(stats.studentized_range.sf(q, k, anova.df_within))
            pairwise.append(
                PairwiseComparison(
                    a=gi.name,
                    b=gj.name,
                    mean_difference=diff,
                    q_statistic=float(q),
                    p_value=p,
                    reject=bool(p < alpha),
                )
            )
    return SignificanceReport(alpha=alpha, anova=anova, pairwise=pairwise)


@dataclass
class CurvePoint:
    """One budget step of an accuracy curve, aggregated over repetitions."""

    iteration: int
    labeled_fraction: float
    mean: float
    std: float
    n: int


def curve_from_rows(rows: list[dict], metric: str = "test_acc") -> list[CurvePoint]:
    """Aggregate results-table rows into a per-iteration accuracy curve.

    Repetitions = distinct (seed, fold) cells.  Missing cells at an
    iteration simply lower that point's n; the unbiased std needs at
    least two values and is reported as 0.0 for singletons.
    """
    if metric not in RESULTS_COLUMNS:
        raise ValueError(f"metric {metric!r} not a results column")
    by_iter: dict[int, list[tuple[float, float]]] = {}
    for row in rows:
        it = int(row["iteration"])
        by_iter.setdefault(it, []).append(
            (float(row["labeled_fraction"]), float(row[metric]))
        )
    points = []
    for it in sorted(by_iter):
        pairs = by_iter[it]
        fracs = {f for f, _ in pairs}
        if len(fracs) > 1:
            raise ValueError(
                f"iteration {it} mixes labeled fractions {sorted(fracs)}; "
                "rows come from incompatible configs"
            )
        vals = np.array([v for _, v in pairs])
        points.append(
            CurvePoint(
                iteration=it,
                labeled_fraction=pairs[0][0],
                mean=float(vals.mean()),
                std=float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                n=len(vals),
            )
        )
    return points


def final_iteration_groups(
    rows_by_method: dict[str, list[dict]], metric: str = "test_acc"
) -> list[MethodGroup]:
    """One MethodGroup per strategy from each cell's last iteration."""
    groups = []
    for name, rows in sorted(rows_by_method.items()):
        last: dict[tuple[str, str], tuple[int, float]] = {}
        for row in rows:
            cell = (row["seed"], row["fold"])
            it = int(row["iteration"])
            if cell not in last or it > last[cell][0]:
                last[cell] = (it, float(row[metric]))
        groups.append(MethodGroup(name, np.array([v for _, v in last.values()])))
    return groups


def active_set_overlap(a: np.ndarray, b: np.ndarray) -> float:
    """|A intersect B| / |A| for two equally sized cumulative selections."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if len(a) != len(b):
        raise ValueError(f"selection sizes differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("empty selections have no overlap")
    if len(np.unique(a)) != len(a) or len(np.unique(b)) != len(b):
        raise ValueError("selections must not contain duplicates")
    return len(np.intersect1d(a, b)) / len(a)
