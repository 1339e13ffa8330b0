"""Turn finished run directories into a comparison report.

A report directory contains delimited tables (curves.csv,
significance.csv), a plain-text summary, and rendered figures: accuracy
vs labeled fraction with standard-deviation bands, and the selection
overlap heatmap when more than one strategy is present.  Table bytes are
deterministic for fixed inputs: methods are sorted and floats are
written with fixed precision.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .analysis import (
    CurvePoint,
    active_set_overlap,
    curve_from_rows,
    final_iteration_groups,
    tukey_kramer,
)
from .config import ExperimentConfig, load_config
from .persistence import read_index_set, read_results_table

log = logging.getLogger(__name__)


@dataclass
class ExperimentResults:
    """Everything analyze needs from one experiment directory."""

    config: ExperimentConfig
    config_hash: str
    rows: list[dict]
    final_labeled: dict[tuple[int, int], np.ndarray]  # (seed, fold) -> indices


def _cell_dirs(experiment_dir: Path):
    for seed_dir in sorted(experiment_dir.iterdir()):
        if not seed_dir.is_dir() or not seed_dir.name.isdigit():
            continue
        for fold_dir in sorted(seed_dir.iterdir()):
            if fold_dir.is_dir() and fold_dir.name.isdigit():
                yield int(seed_dir.name), int(fold_dir.name), fold_dir


def load_experiment(experiment_dir) -> ExperimentResults:
    """Read config snapshot, per-cell results and final labeled sets."""
    experiment_dir = Path(experiment_dir)
    snapshot = experiment_dir / "config.json"
    if not snapshot.exists():
        raise FileNotFoundError(f"{experiment_dir} has no config.json snapshot")
    config = load_config(snapshot)
    config_hash = experiment_dir.name
    rows: list[dict] = []
    final_labeled: dict[tuple[int, int], np.ndarray] = {}
    for seed, fold, cell_dir in _cell_dirs(experiment_dir):
        results_path = cell_dir / "results.csv"
        if not results_path.exists():
            log.warning("skipping cell without results: %s", cell_dir)
            continue
        rows.extend(read_results_table(results_path))
        cumulative: list[np.ndarray] = []
        iteration = 0
        while True:
            iter_dir = cell_dir / f"iter{iteration}"
            name = "labeled.json" if iteration == 0 else "selected.json"
            if not (iter_dir / name).exists():
                break
            cumulative.append(read_index_set(iter_dir / name).as_array())
            iteration += 1
        if cumulative:
            final_labeled[(seed, fold)] = np.sort(np.concatenate(cumulative))
    if not rows:
        raise FileNotFoundError(f"{experiment_dir} contains no completed cells")
    return ExperimentResults(config, config_hash, rows, final_labeled)


def method_names(experiments: list[ExperimentResults]) -> list[str]:
    """Strategy ids, disambiguated by hash prefix when two experiments
    use the same strategy (e.g. the same rule at two budgets)."""
    ids = [e.config.strategy_id for e in experiments]
    names = []
    for e in experiments:
        if ids.count(e.config.strategy_id) > 1:
            names.append(f"{e.config.strategy_id}@{e.config_hash[:6]}")
        else:
            names.append(e.config.strategy_id)
    return names


def overlap_matrix(
    experiments: list[ExperimentResults], names: list[str]
) -> tuple[np.ndarray, int]:
    """Mean final-selection overlap for every method pair, averaged over
    the (seed, fold) cells the pair has in common.  Returns the matrix
    and the number of shared cells (NaN entries mean no shared cells)."""
    k = len(experiments)
    matrix = np.full((k, k), np.nan)
    shared_total = 0
    for i in range(k):
        matrix[i, i] = 1.0
        for j in range(i + 1, k):
            a, b = experiments[i].final_labeled, experiments[j].final_labeled
            cells = sorted(set(a) & set(b))
            if not cells:
                log.warning("no shared cells between %s and %s", names[i], names[j])
                continue
            vals = [active_set_overlap(a[c], b[c]) for c in cells]
            matrix[i, j] = matrix[j, i] = float(np.mean(vals))
            shared_total += len(cells)
    return matrix, shared_total


def _write_curves_csv(path: Path, curves: dict[str, dict[str, list[CurvePoint]]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            [
                "method",
                "iteration",
                "labeled_fraction",
                "test_acc_mean",
                "test_acc_std",
                "val_acc_mean",
                "val_acc_std",
                "n",
            ]
        )
        for method in sorted(curves):
            test_pts = curves[method]["test_acc"]
            val_pts = {p.iteration: p for p in curves[method]["val_acc"]}
            for p in test_pts:
                v = val_pts[p.iteration]
                writer.writerow(
                    [
                        method,
                        p.iteration,
                        f"{p.labeled_fraction:.6f}",
                        f"{p.mean:.6f}",
                        f"{p.std:.6f}",
                        f"{v.mean:.6f}",
                        f"{v.std:.6f}",
                        p.n,
                    ]
                )


def _write_significance_csv(path: Path, report) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["method_a", "method_b", "mean_difference", "q_statistic", "p_value", "reject"]
        )
        for c in report.pairwise:
            writer.writerow(
                [
                    c.a,
                    c.b,
                    f"{c.mean_difference:.6f}",
                    f"{c.q_statistic:.6f}",
                    f"{c.p_value:.6f}",
                    int(c.reject),
                ]
            )


def _summary_text(curves, report, names, matrix, alpha) -> str:
    lines = ["final test accuracy (mean +/- std over cells)", ""]
    for method in sorted(curves):
        pts = curves[method]["test_acc"]
        last = pts[-1]
        lines.append(
            f"  {method:<12s} {last.mean:.4f} +/- {last.std:.4f}"
            f"  (n={last.n}, labeled {last.labeled_fraction:.3f})"
        )
    lines.append("")
    if report is not None:
        a = report.anova
        lines.append(
            f"one-way ANOVA: F({a.df_between}, {a.df_within}) = {a.f_statistic:.4f},"
            f" p = {a.p_value:.6f}"
        )
        rejected = report.rejected_pairs()
        if rejected:
            lines.append(f"pairs significant at alpha={alpha:g} (Tukey-Kramer):")
            for pa, pb in rejected:
                lines.append(f"  {pa} vs {pb}")
        else:
            lines.append(f"no pair significant at alpha={alpha:g} (Tukey-Kramer)")
    else:
        lines.append("significance skipped: need >= 2 methods with >= 2 cells each")
    if matrix is not None and len(names) > 1:
        lines.append("")
        lines.append("mean final-selection overlap")
        width = max(len(n) for n in names)
        header = " " * (width + 2) + "  ".join(f"{n:>{width}s}" for n in names)
        lines.append(header)
        for i, n in enumerate(names):
            cells = "  ".join(
                f"{matrix[i, j]:>{width}.3f}" if np.isfinite(matrix[i, j])
                else f"{'-':>{width}s}"
                for j in range(len(names))
            )
            lines.append(f"{n:<{width}s}  {cells}")
    return "\n".join(lines) + "\n"


def _plot_curves(path: Path, curves: dict[str, dict[str, list[CurvePoint]]]) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for method in sorted(curves):
        pts = curves[method]["test_acc"]
        x = np.array([p.labeled_fraction for p in pts])
        y = np.array([p.mean for p in pts])
        s = np.array([p.std for p in pts])
        (line,) = ax.plot(x, y, marker="o", markersize=3, label=method)
        ax.fill_between(x, y - s, y + s, alpha=0.15, color=line.get_color())
    ax.set_xlabel("labeled fraction of non-test pool")
    ax.set_ylabel("test accuracy")
    ax.set_title("accuracy vs annotation budget")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def _plot_overlap(path: Path, names: list[str], matrix: np.ndarray) -> None:
    fig, ax = plt.subplots(figsize=(1.1 * len(names) + 2, 1.1 * len(names) + 1.5))
    shown = np.ma.masked_invalid(matrix)
    im = ax.imshow(shown, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_yticks(range(len(names)), names)
    for i in range(len(names)):
        for j in range(len(names)):
            text = f"{matrix[i, j]:.2f}" if np.isfinite(matrix[i, j]) else "-"
            ax.text(j, i, text, ha="center", va="center", color="white", fontsize=9)
    fig.colorbar(im, ax=ax, label="mean overlap of final selections")
    ax.set_title("selection overlap")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def emit_report(
    experiments: list[ExperimentResults], out_dir, alpha: float = 0.05
) -> list[Path]:
    """Write the full report for a set of experiments; returns the paths."""
    if not experiments:
        raise ValueError("no experiments to report on")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = method_names(experiments)

    curves: dict[str, dict[str, list[CurvePoint]]] = {}
    for name, exp in zip(names, experiments):
        curves[name] = {
            metric: curve_from_rows(exp.rows, metric=metric)
            for metric in ("test_acc", "val_acc")
        }

    rows_by_method = {n: e.rows for n, e in zip(names, experiments)}
    report = None
    cells_per_method = [
        len({(r["seed"], r["fold"]) for r in e.rows}) for e in experiments
    ]
    if len(experiments) > 1 and all(c >= 2 for c in cells_per_method):
        report = tukey_kramer(final_iteration_groups(rows_by_method), alpha=alpha)
    elif len(experiments) > 1:
        log.warning("significance skipped: some method has < 2 finished cells")

    written = []
    curves_path = out_dir / "curves.csv"
    _write_curves_csv(curves_path, curves)
    written.append(curves_path)

    if report is not None:
        sig_path = out_dir / "significance.csv"
        _write_significance_csv(sig_path, report)
        written.append(sig_path)

    matrix = None
    if len(experiments) > 1:
        matrix, _ = overlap_matrix(experiments, names)
        heat_path = out_dir / "overlap_heatmap.png"
        _plot_overlap(heat_path, names, matrix)
        written.append(heat_path)

    fig_path = out_dir / "accuracy_curves.png"
    _plot_curves(fig_path, curves)
    written.append(fig_path)

    summary_path = out_dir / "summary.txt"
    summary_path.write_text(_summary_text(curves, report, names, matrix, alpha))
    written.append(summary_path)
    return written
