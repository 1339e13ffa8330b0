"""The sample-annotate-train loop and its on-disk run ledger.

One run cell is (config, seed, fold).  The loop:

1. split the dataset into train/val/test and draw the initial labeled
   fold L0 (both from a fixed master seed, so every run seed and every
   strategy shares identical partitions),
2. train a task model on the labeled set from scratch,
3. score the unlabeled pool with the configured strategy, select k,
4. send the selection to the (possibly noisy) oracle, grow the labeled
   set, and go back to 2 until the iteration budget is spent.

Every iteration persists its selected indices, oracle annotations,
metrics record, and model checkpoint, which makes cells resumable and
selections replayable against other architectures.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .acquisition import (
    CommitteePredictions,
    bald,
    bald_scores,
    cog_sample,
    cog_scores,
    coreset_greedy,
    least_confidence,
    least_confidence_scores,
    max_entropy,
    max_entropy_scores,
    most_confident,
    random_sample,
    variance_ratio,
    variance_ratio_scores,
)
from .config import ExperimentConfig, config_hash, load_config, snapshot_config
from .datasets import Dataset, load_dataset
from .errors import ConfigError
from .models import (
    build_model,
    evaluate_accuracy,
    mc_dropout_predict,
    penultimate_embeddings,
    predict_proba,
    train_task_model,
)
from .models.engine import dropout_for
from .partitioning import (
    PartitionState,
    imbalance_profile,
    max_exhaustion_free_total,
    sample_imbalanced,
    split_dataset,
)
from .persistence import (
    ALIterationRecord,
    IndexSetFile,
    RunPaths,
    acquire_lock,
    read_index_set,
    read_record,
    release_lock,
    results_row,
    write_index_set,
    write_record,
    write_results_table,
)
from .regularization import class_weights
from .seeding import make_rng, torch_seed_from
from .vaal import fit_vaal, score_seen, vaal_select

log = logging.getLogger(__name__)

# Datasets without a shipped test split give up this fraction of D.
DEFAULT_TEST_FRACTION = 0.2

# All partitions derive from this constant, never from run seeds: every
# seed, strategy, and architecture sees the same splits and folds, which
# is what makes selections transferable across configs.
_PARTITION_MASTER_SEED = 0


@dataclass(frozen=True)
class OracleSpec:
    """Annotation behaviour: fraction of each request that comes back wrong."""

    noise_fraction: float = 0.0
    mode: str = "reassign"  # reassign: uniform wrong class; shuffle: permute

    def __post_init__(self):
        if not (0.0 <= self.noise_fraction <= 1.0):
            raise ValueError("noise_fraction must lie in [0, 1]")
        if self.mode not in ("reassign", "shuffle"):
            raise ValueError(f"unknown oracle mode {self.mode!r}")


def annotate(
    true_labels: np.ndarray,
    indices: np.ndarray,
    oracle: OracleSpec,
    rng: np.random.Generator,
    num_classes: int,
) -> np.ndarray:
    """Oracle labels for ``indices``; exactly round(p * k) of them corrupted.

    reassign draws a uniform wrong class for each corrupted position;
    shuffle permutes the true labels among the corrupted positions (noise
    that preserves the marginal label distribution).
    """
    indices = np.asarray(indices, dtype=np.int64)
    labels = true_labels[indices].astype(np.int64).copy()
    m = int(round(oracle.noise_fraction * len(indices)))
    if m == 0:
        return labels
    pos = rng.choice(len(indices), size=m, replace=False)
    if oracle.mode == "reassign":
        if num_classes < 2:
            raise ValueError("cannot corrupt labels with fewer than 2 classes")
        offsets = rng.integers(1, num_classes, size=m)
        labels[pos] = (labels[pos] + offsets) % num_classes
    else:
        labels[pos] = labels[pos][rng.permutation(m)]
    return labels


def base_pool_size(state: PartitionState) -> int:
    """The base that labeled fractions and budgets are measured against."""
    return len(state.train_indices) + len(state.val_indices)


def build_partition(dataset: Dataset, config: ExperimentConfig) -> PartitionState:
    """train/val/test from the master seed, with optional long-tailed pool."""
    test_spec = (
        dataset.provided_test_indices
        if dataset.provided_test_indices is not None
        else DEFAULT_TEST_FRACTION
    )
    state = split_dataset(
        len(dataset), config.val_fraction, test_spec, make_rng(_PARTITION_MASTER_SEED, "fold", 0)
    )
    if config.imbalance_enabled and config.imbalance_scope == "pool":
        profile = imbalance_profile(dataset.num_classes)
        pool_labels = dataset.labels[state.train_indices]
        total = max_exhaustion_free_total(pool_labels, profile)
        tailed = sample_imbalanced(
            dataset.labels,
            state.train_indices,
            profile,
            total,
            make_rng(_PARTITION_MASTER_SEED, "fold", 2),
        )
        state = PartitionState(
            train_indices=tailed,
            val_indices=state.val_indices,
            test_indices=state.test_indices,
            labeled=[],
            unlabeled=tailed,
        )
        state.check_invariants()
    return state


def initial_fold(
    dataset: Dataset, config: ExperimentConfig, state: PartitionState, fold_id: int
) -> np.ndarray:
    """The fold_id'th independently drawn initial labeled set."""
    if fold_id < 0:
        raise ValueError("fold_id must be >= 0")
    size = int(round(config.initial_label_fraction * base_pool_size(state)))
    size = min(size, len(state.train_indices))
    if size < 1:
        raise ConfigError(["initial_label_fraction yields an empty initial set"])
    rng = make_rng(_PARTITION_MASTER_SEED, "fold", 1)
    if config.imbalance_enabled and config.imbalance_scope == "initial":
        profile = imbalance_profile(dataset.num_classes)
        folds = [
            sample_imbalanced(dataset.labels, state.train_indices, profile, size, rng)
            for _ in range(fold_id + 1)
        ]
    else:
        folds = [
            np.sort(rng.choice(state.train_indices, size=size, replace=False))
            for _ in range(fold_id + 1)
        ]
    return folds[fold_id]


def iteration_budget(config: ExperimentConfig, state: PartitionState) -> int:
    k = int(round(config.budget_fraction * base_pool_size(state)))
    return max(k, 1)


def _committee_votes(
    dataset, config, state, labeled_labels, seed, fold_id, iteration, device
) -> CommitteePredictions:
    """Train committee_size models (member 0 = the reporting model's seed)
    and record each member's predicted class on the unlabeled pool."""
    votes = []
    for member in range(config.committee_size):
        torch_seed = torch_seed_from(
            make_rng(seed, "init", fold_id, iteration, member)
        )
        model, _ = train_task_model(
            dataset.images,
            state.labeled,
            labeled_labels,
            state.val_indices,
            dataset.labels[state.val_indices],
            num_classes=dataset.num_classes,
            config=config,
            torch_seed=torch_seed,
            augment_rng=make_rng(seed, "augment", fold_id, iteration, member),
            augment_preset=dataset.augment_preset,
            device=device,
        )
        probs = predict_proba(model, dataset.images, state.unlabeled, device=device)
        votes.append(probs.values[0].argmax(axis=1))
    return CommitteePredictions(np.stack(votes, axis=1), state.unlabeled)


def select_batch(
    strategy_id: str,
    model,
    dataset: Dataset,
    state: PartitionState,
    k: int,
    config: ExperimentConfig,
    seed: int,
    fold_id: int,
    iteration: int,
    labeled_labels: np.ndarray,
    device="cpu",
    scores_out: Path | None = None,
) -> np.ndarray:
    """Apply the strategy to the current pool; returns k unlabeled indices."""
    pool = state.unlabeled
    sample_rng = make_rng(seed, "sample", fold_id, iteration)

    def dump(scored):
        if scores_out is not None:
            scores_out.parent.mkdir(parents=True, exist_ok=True)
            lines = ["index,score"] + [
                f"{i},{s:.10g}" for i, s in zip(scored.pool_indices, scored.scores)
            ]
            scores_out.write_text("\n".join(lines) + "\n")
        return scored

    if strategy_id == "random":
        return random_sample(pool, k, sample_rng)
    if strategy_id in ("uc", "uc-most-confident"):
        probs = predict_proba(model, dataset.images, pool, device=device)
        dump(least_confidence_scores(probs))
        rule = least_confidence if strategy_id == "uc" else most_confident
        return rule(probs, k)
    if strategy_id in ("maxent", "bald"):
        mc = mc_dropout_predict(
            model,
            dataset.images,
            pool,
            passes=config.mc_passes,
            torch_seed=torch_seed_from(sample_rng),
            device=device,
        )
        if strategy_id == "maxent":
            dump(max_entropy_scores(mc))
            return max_entropy(mc, k)
        dump(bald_scores(mc))
        return bald(mc, k)
    if strategy_id in ("cog", "coreset"):
        everyone = np.concatenate([state.labeled, pool])
        emb = penultimate_embeddings(model, dataset.images, everyone, device=device)
        if strategy_id == "cog":
            dump(cog_scores(emb, pool))
            return cog_sample(emb, pool, k)
        return coreset_greedy(emb, state.labeled, pool, k)
    if strategy_id == "vaal":
        models, _ = fit_vaal(
            dataset.images,
            state.labeled,
            pool,
            torch_seed=torch_seed_from(sample_rng),
            shuffle_rng=sample_rng,
            epochs=config.optimizer.epochs,
            batch_size=config.optimizer.batch_size,
            device=device,
        )
        dump(score_seen(models, dataset.images, pool, device=device))
        return vaal_select(models, dataset.images, pool, k, device=device)
    if strategy_id == "qbc":
        votes = _committee_votes(
            dataset, config, state, labeled_labels, seed, fold_id, iteration, device
        )
        dump(variance_ratio_scores(votes))
        return variance_ratio(votes, k)
    raise ConfigError([f"unknown strategy_id {strategy_id!r}"])


def _write_annotations(path: Path, indices: np.ndarray, labels: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "indices": [int(i) for i in indices],
        "labels": [int(v) for v in labels],
    }
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _read_annotations(path: Path) -> tuple[np.ndarray, np.ndarray]:
    d = json.loads(path.read_text())
    return (
        np.asarray(d["indices"], dtype=np.int64),
        np.asarray(d["labels"], dtype=np.int64),
    )


def _annotations_path(paths: RunPaths, iteration: int) -> Path:
    return paths.iter_dir(iteration) / "annotations.json"


def _train_iteration(
    dataset, config, state, labeled_labels, seed, fold_id, iteration, device
):
    """Fresh model on the current labeled set; returns (model, report)."""
    lr = None
    if iteration == 0 and config.optimizer.base_lr is not None:
        lr = config.optimizer.base_lr
    weight = None
    if config.imbalance_enabled:
        weight = class_weights(labeled_labels, dataset.num_classes)
    return train_task_model(
        dataset.images,
        state.labeled,
        labeled_labels,
        state.val_indices,
        dataset.labels[state.val_indices],
        num_classes=dataset.num_classes,
        config=config,
        torch_seed=torch_seed_from(make_rng(seed, "init", fold_id, iteration, 0)),
        augment_rng=make_rng(seed, "augment", fold_id, iteration, 0),
        augment_preset=dataset.augment_preset,
        lr=lr,
        class_weight=weight,
        device=device,
    )


def _load_model(paths: RunPaths, iteration: int, config, num_classes: int, device):
    model = build_model(config.architecture_id, num_classes, dropout_for(config))
    state = torch.load(paths.checkpoint_path(iteration), map_location=device, weights_only=True)
    model.load_state_dict(state)
    return model.to(device)


def _load_progress(paths: RunPaths, state: PartitionState):
    """Reconstruct (state, labels_map, records, next_iteration) from disk."""
    labels_map: dict[int, int] = {}
    records: list[ALIterationRecord] = []
    iteration = 0
    while (
        (paths.record_path(iteration)).exists()
        and _annotations_path(paths, iteration).exists()
        and paths.checkpoint_path(iteration).exists()
    ):
        idx, labs = _read_annotations(_annotations_path(paths, iteration))
        if iteration == 0:
            state = state.with_initial_labels(idx)
        else:
            state = state.annotate(idx)
        labels_map.update(zip(idx.tolist(), labs.tolist()))
        records.append(read_record(paths.record_path(iteration)))
        iteration += 1
    return state, labels_map, records, iteration


def _labels_for(state: PartitionState, labels_map: dict[int, int]) -> np.ndarray:
    return np.asarray([labels_map[i] for i in state.labeled.tolist()], dtype=np.int64)


def run_al_cell(
    config: ExperimentConfig,
    seed: int,
    fold_id: int,
    runs_root,
    dataset: Dataset | None = None,
    data_root: str | None = None,
    device="cpu",
    dump_scores: bool = False,
    resume: bool = True,
) -> list[ALIterationRecord]:
    """Execute (or resume) one run cell and persist everything it produces."""
    config.validate()
    if seed not in config.seeds:
        raise ConfigError([f"seed {seed} not in config.seeds {config.seeds}"])
    if fold_id not in config.initial_fold_ids:
        raise ConfigError(
            [f"fold {fold_id} not in config.initial_fold_ids {config.initial_fold_ids}"]
        )
    if dataset is None:
        dataset = load_dataset(config.dataset_id, data_root)
    paths = RunPaths(runs_root, config_hash(config), seed, fold_id)
    oracle = OracleSpec(config.oracle_noise_fraction, config.noise_mode)

    snapshot_config(config, paths.config_snapshot_path)
    fresh = build_partition(dataset, config)
    _write_splits_once(paths, dataset, fresh)

    acquire_lock(paths)
    try:
        state, labels_map, records, start_iter = (
            _load_progress(paths, fresh) if resume else (fresh, {}, [], 0)
        )
        if start_iter > config.num_al_iterations:
            log.info("cell %s already complete", paths.cell_dir)
            return records
        if start_iter > 0:
            log.info("resuming cell %s at iteration %d", paths.cell_dir, start_iter)

        test_images = dataset.images[state.test_indices]
        test_labels = dataset.labels[state.test_indices]
        n_base = base_pool_size(fresh)

        for iteration in range(start_iter, config.num_al_iterations + 1):
            t0 = time.perf_counter()
            if iteration == 0:
                chosen = initial_fold(dataset, config, state, fold_id)
                # the initial fold is annotated before any model exists and
                # its labels are taken as clean
                labels = dataset.labels[chosen].astype(np.int64)
                state = state.with_initial_labels(chosen)
                role = "labeled"
                set_name = "labeled.json"
            else:
                model = _load_model(paths, iteration - 1, config, dataset.num_classes, device)
                k = min(iteration_budget(config, state), len(state.unlabeled))
                if k == 0:
                    raise ConfigError(["unlabeled pool exhausted before budget"])
                chosen = select_batch(
                    config.strategy_id,
                    model,
                    dataset,
                    state,
                    k,
                    config,
                    seed,
                    fold_id,
                    iteration,
                    _labels_for(state, labels_map),
                    device=device,
                    scores_out=paths.scores_path(iteration) if dump_scores else None,
                )
                labels = annotate(
                    dataset.labels,
                    chosen,
                    oracle,
                    make_rng(seed, "noise", fold_id, iteration),
                    dataset.num_classes,
                )
                state = state.annotate(chosen)
                role = "selected"
                set_name = "selected.json"

            labels_map.update(zip(chosen.tolist(), labels.tolist()))
            state.check_invariants()

            index_path = paths.iter_dir(iteration) / set_name
            write_index_set(
                IndexSetFile(
                    indices=sorted(int(i) for i in chosen),
                    dataset_id=dataset.dataset_id,
                    split_role=role,
                    provenance={
                        "config_hash": paths.config_hash,
                        "seed": seed,
                        "fold": fold_id,
                        "iteration": iteration,
                    },
                ),
                index_path,
            )
            _write_annotations(_annotations_path(paths, iteration), chosen, labels)

            model, report = _train_iteration(
                dataset,
                config,
                state,
                _labels_for(state, labels_map),
                seed,
                fold_id,
                iteration,
                device,
            )
            torch.save(model.state_dict(), paths.checkpoint_path(iteration))
            test_acc = evaluate_accuracy(model, test_images, test_labels, device=device)

            record = ALIterationRecord(
                iteration=iteration,
                labeled_count=len(state.labeled),
                selected_indices_path=str(index_path.relative_to(paths.cell_dir)),
                val_accuracy=report.final_val_accuracy,
                test_accuracy=test_acc,
                wall_time_s=time.perf_counter() - t0,
                checkpoint_ref=str(
                    paths.checkpoint_path(iteration).relative_to(paths.cell_dir)
                ),
            )
            write_record(record, paths.record_path(iteration))
            records.append(record)
            _flush_results(paths, config, seed, fold_id, records, n_base)
            log.info(
                "iter %d: |L|=%d val=%.4f test=%.4f",
                iteration,
                record.labeled_count,
                record.val_accuracy,
                record.test_accuracy,
            )
    finally:
        release_lock(paths)
    return records


def _write_splits_once(paths: RunPaths, dataset: Dataset, state: PartitionState) -> None:
    splits_dir = paths.experiment_dir / "splits"
    if splits_dir.exists():
        return
    for role, idx in (
        ("train", state.train_indices),
        ("val", state.val_indices),
        ("test", state.test_indices),
    ):
        write_index_set(
            IndexSetFile(
                indices=[int(i) for i in idx],
                dataset_id=dataset.dataset_id,
                split_role=role,
                provenance={"config_hash": paths.config_hash},
            ),
            splits_dir / f"{role}.json",
        )


def _flush_results(paths, config, seed, fold_id, records, n_base) -> None:
    rows = [
        results_row(paths.config_hash, seed, fold_id, r, r.labeled_count / n_base)
        for r in records
    ]
    write_results_table(rows, paths.results_path)


def run_suite(
    config: ExperimentConfig,
    runs_root,
    data_root: str | None = None,
    device="cpu",
    dump_scores: bool = False,
) -> dict[tuple[int, int], list[ALIterationRecord]]:
    """All seed x fold cells of a config, resuming any partial ones."""
    config.validate()
    dataset = load_dataset(config.dataset_id, data_root)
    out = {}
    for seed in config.seeds:
        for fold_id in config.initial_fold_ids:
            out[(seed, fold_id)] = run_al_cell(
                config,
                seed,
                fold_id,
                runs_root,
                dataset=dataset,
                device=device,
                dump_scores=dump_scores,
            )
    return out


def replay_transfer(
    source_hash: str,
    target_config: ExperimentConfig,
    runs_root,
    data_root: str | None = None,
    device="cpu",
) -> dict[tuple[int, int], list[ALIterationRecord]]:
    """Re-train under ``target_config`` on the batches a source run selected.

    The source run's stored annotations (indices and oracle labels) are
    replayed verbatim, so the only difference from the source run is the
    model being trained.  Source and target must agree on dataset and
    partition geometry.
    """
    target_config.validate()
    runs_root = Path(runs_root)
    src_dir = runs_root / source_hash
    if not src_dir.exists():
        raise FileNotFoundError(f"no source runs at {src_dir}")
    source_config = load_config(src_dir / "config.json")
    for field_name in (
        "dataset_id",
        "initial_label_fraction",
        "budget_fraction",
        "val_fraction",
        "imbalance_enabled",
        "imbalance_scope",
    ):
        a, b = getattr(source_config, field_name), getattr(target_config, field_name)
        if a != b:
            raise ConfigError(
                [f"transfer requires matching {field_name}: source={a!r} target={b!r}"]
            )
    if target_config.num_al_iterations > source_config.num_al_iterations:
        raise ConfigError(
            ["target num_al_iterations exceeds what the source run recorded"]
        )

    dataset = load_dataset(target_config.dataset_id, data_root)
    out = {}
    for seed in target_config.seeds:
        for fold_id in target_config.initial_fold_ids:
            src_paths = RunPaths(runs_root, source_hash, seed, fold_id)
            if not src_paths.record_path(target_config.num_al_iterations).exists():
                raise FileNotFoundError(
                    f"source cell {src_paths.cell_dir} incomplete; run it first"
                )
            out[(seed, fold_id)] = _replay_cell(
                source_hash, src_paths, target_config, seed, fold_id, runs_root, dataset, device
            )
    return out


def _replay_cell(
    source_hash, src_paths, config, seed, fold_id, runs_root, dataset, device
) -> list[ALIterationRecord]:
    paths = RunPaths(runs_root, config_hash(config), seed, fold_id)
    snapshot_config(config, paths.config_snapshot_path)
    state = build_partition(dataset, config)
    _write_splits_once(paths, dataset, state)
    n_base = base_pool_size(state)

    acquire_lock(paths)
    try:
        labels_map: dict[int, int] = {}
        records: list[ALIterationRecord] = []
        test_images = dataset.images[state.test_indices]
        test_labels = dataset.labels[state.test_indices]
        for iteration in range(config.num_al_iterations + 1):
            t0 = time.perf_counter()
            chosen, labels = _read_annotations(_annotations_path(src_paths, iteration))
            # cross-check the stored index set against this dataset
            set_name = "labeled.json" if iteration == 0 else "selected.json"
            stored = read_index_set(src_paths.iter_dir(iteration) / set_name)
            stored.validate_against(len(dataset))
            if stored.indices != sorted(int(i) for i in chosen):
                raise ConfigError(
                    [f"source iteration {iteration}: annotations and index set disagree"]
                )
            state = (
                state.with_initial_labels(chosen) if iteration == 0 else state.annotate(chosen)
            )
            labels_map.update(zip(chosen.tolist(), labels.tolist()))

            _write_annotations(_annotations_path(paths, iteration), chosen, labels)
            write_index_set(
                IndexSetFile(
                    indices=sorted(int(i) for i in chosen),
                    dataset_id=dataset.dataset_id,
                    split_role=stored.split_role,
                    provenance={
                        "config_hash": paths.config_hash,
                        "seed": seed,
                        "fold": fold_id,
                        "iteration": iteration,
                        "transfer_source": source_hash,
                    },
                ),
                paths.iter_dir(iteration) / set_name,
            )

            model, report = _train_iteration(
                dataset,
                config,
                state,
                _labels_for(state, labels_map),
                seed,
                fold_id,
                iteration,
                device,
            )
            torch.save(model.state_dict(), paths.checkpoint_path(iteration))
            record = ALIterationRecord(
                iteration=iteration,
                labeled_count=len(state.labeled),
                selected_indices_path=str(
                    (paths.iter_dir(iteration) / set_name).relative_to(paths.cell_dir)
                ),
                val_accuracy=report.final_val_accuracy,
                test_accuracy=evaluate_accuracy(model, test_images, test_labels, device=device),
                wall_time_s=time.perf_counter() - t0,
                checkpoint_ref=str(
                    paths.checkpoint_path(iteration).relative_to(paths.cell_dir)
                ),
                extra={"transfer_source": source_hash},
            )
            write_record(record, paths.record_path(iteration))
            records.append(record)
            _flush_results(paths, config, seed, fold_id, records, n_base)
    finally:
        release_lock(paths)
    return records
