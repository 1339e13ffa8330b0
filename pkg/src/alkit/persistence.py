"""On-disk run artifacts: index sets, iteration records, results tables.

Everything a finished run leaves behind is plain structured text (JSON /
CSV) so partitions and selections can be shared and replayed across
toolkits.  Layout per run cell::

    runs/<config_hash>/<seed>/<fold>/
        config.json             # canonical snapshot
        results.csv             # one row per iteration
        iter<i>/
            selected.json       # IndexSetFile for this iteration's draw
            record.json         # ALIterationRecord
            model.pt            # best-on-validation checkpoint
"""
from __future__ import annotations

import csv
import json
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IndexSetError

SPLIT_ROLES = ("labeled", "selected", "val", "test", "train")

RESULTS_COLUMNS = (
    "config_hash",
    "seed",
    "fold",
    "iteration",
    "labeled_fraction",
    "val_acc",
    "test_acc",
    "wall_time_s",
)


@dataclass
class IndexSetFile:
    """A persisted set of dataset indices with provenance.

    ``indices`` must be strictly increasing non-negative integers.
    ``split_role`` is one of labeled / selected / val / test / train;
    selections carry the iteration they were drawn at in provenance.
    """

    indices: list[int]
    dataset_id: str
    split_role: str
    provenance: dict = field(default_factory=dict)
    provenance_mismatch: bool = False  # set on read, never serialized

    def __post_init__(self):
        self.indices = [int(i) for i in self.indices]
        errs = self.structural_errors()
        if errs:
            raise IndexSetError("; ".join(errs))

    def structural_errors(self) -> list[str]:
        errs = []
        idx = self.indices
        if any(i < 0 for i in idx):
            errs.append("indices must be non-negative")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            errs.append("indices must be strictly increasing (sorted, no duplicates)")
        if self.split_role not in SPLIT_ROLES:
            errs.append(f"split_role {self.split_role!r} not in {SPLIT_ROLES}")
        return errs

    def validate_against(self, dataset_size: int) -> None:
        if self.indices and self.indices[-1] >= dataset_size:
            raise IndexSetError(
                f"index {self.indices[-1]} out of range for dataset of size {dataset_size}"
            )

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)


def write_index_set(s: IndexSetFile, path) -> None:
    errs = s.structural_errors()
    if errs:
        raise IndexSetError("; ".join(errs))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "indices": s.indices,
        "dataset_id": s.dataset_id,
        "split_role": s.split_role,
        "provenance": s.provenance,
    }
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def read_index_set(path, expected_config_hash: str | None = None) -> IndexSetFile:
    """Read and structurally validate; flags (not fails) provenance mismatch."""
    d = json.loads(Path(path).read_text())
    try:
        s = IndexSetFile(
            indices=d["indices"],
            dataset_id=d["dataset_id"],
            split_role=d["split_role"],
            provenance=d.get("provenance", {}),
        )
    except KeyError as exc:
        raise IndexSetError(f"index-set file {path} missing field {exc}") from exc
    if (
        expected_config_hash is not None
        and s.provenance.get("config_hash") not in (None, expected_config_hash)
    ):
        s.provenance_mismatch = True
    return s


@dataclass
class ALIterationRecord:
    """Per-iteration ledger entry: what was selected and how the model did."""

    iteration: int
    labeled_count: int
    selected_indices_path: str | None  # None for the base (iteration 0) row
    val_accuracy: float
    test_accuracy: float
    wall_time_s: float
    checkpoint_ref: str | None = None
    extra: dict = field(default_factory=dict)  # e.g. transfer source hash

    def __post_init__(self):
        if self.iteration < 0:
            raise ValueError("iteration must be >= 0")
        if self.labeled_count < 0:
            raise ValueError("labeled_count must be >= 0")
        for name in ("val_accuracy", "test_accuracy"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} {v} outside [0, 1]")
        if self.wall_time_s < 0:
            raise ValueError("wall_time_s must be >= 0")

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "labeled_count": self.labeled_count,
            "selected_indices_path": self.selected_indices_path,
            "val_accuracy": self.val_accuracy,
            "test_accuracy": self.test_accuracy,
            "wall_time_s": self.wall_time_s,
            "checkpoint_ref": self.checkpoint_ref,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ALIterationRecord":
        return cls(**d)


def write_record(record: ALIterationRecord, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record.to_dict(), sort_keys=True, indent=2) + "\n")


def read_record(path) -> ALIterationRecord:
    return ALIterationRecord.from_dict(json.loads(Path(path).read_text()))


class RunPaths:
    """Path arithmetic for one run cell ``runs/<hash>/<seed>/<fold>``."""

    def __init__(self, root, config_hash: str, seed: int, fold: int):
        self.root = Path(root)
        self.config_hash = config_hash
        self.seed = int(seed)
        self.fold = int(fold)

    @property
    def experiment_dir(self) -> Path:
        return self.root / self.config_hash

    @property
    def cell_dir(self) -> Path:
        return self.experiment_dir / str(self.seed) / str(self.fold)

    def iter_dir(self, i: int) -> Path:
        return self.cell_dir / f"iter{i}"

    def selected_path(self, i: int) -> Path:
        return self.iter_dir(i) / "selected.json"

    def record_path(self, i: int) -> Path:
        return self.iter_dir(i) / "record.json"

    def checkpoint_path(self, i: int) -> Path:
        return self.iter_dir(i) / "model.pt"

    def scores_path(self, i: int) -> Path:
        return self.cell_dir / f"scores_iter{i}.csv"

    @property
    def results_path(self) -> Path:
        return self.cell_dir / "results.csv"

    @property
    def config_snapshot_path(self) -> Path:
        return self.experiment_dir / "config.json"

    @property
    def lock_path(self) -> Path:
        return self.cell_dir / ".lock"


def results_row(config_hash, seed, fold, record: ALIterationRecord, labeled_fraction):
    return {
        "config_hash": config_hash,
        "seed": seed,
        "fold": fold,
        "iteration": record.iteration,
        "labeled_fraction": f"{labeled_fraction:.6f}",
        "val_acc": f"{record.val_accuracy:.6f}",
        "test_acc": f"{record.test_accuracy:.6f}",
        "wall_time_s": f"{record.wall_time_s:.3f}",
    }


def write_results_table(rows: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=RESULTS_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    path.write_text(buf.getvalue())


def read_results_table(path) -> list[dict]:
    with open(path, newline="") as f:
        return [dict(row) for row in csv.DictReader(f)]


def acquire_lock(paths: RunPaths) -> None:
    """Single-writer guard: one orchestrator per run cell directory."""
    paths.cell_dir.mkdir(parents=True, exist_ok=True)
    import os

    try:
        fd = os.open(paths.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(
            f"run cell {paths.cell_dir} is locked by another orchestrator "
            f"(remove {paths.lock_path} if stale)"
        ) from None
    with os.fdopen(fd, "w") as f:
        f.write(str(os.getpid()) + "\n")


def release_lock(paths: RunPaths) -> None:
    paths.lock_path.unlink(missing_ok=True)
