"""Experiment configuration: schema, validation, canonical snapshots.

A config is the complete description of one AL experiment.  Snapshots are
canonical JSON (sorted keys, fixed indentation) so that the content hash
is a stable identity usable as a run-directory name and for provenance
checks on index-set files.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import ConfigError

DATASET_IDS = ("cifar10", "cifar100")
SYNTHETIC_ID_RE = re.compile(r"^synthetic-(\d+)-(\d+)$")  # synthetic-<n>-<classes>
ARCHITECTURE_IDS = ("vgg16bn", "resnet18", "wrn28_2", "smallcnn")
STRATEGY_IDS = (
    "random",
    "uc",
    "uc-most-confident",  # debug/ablation variant of uc
    "maxent",
    "bald",
    "cog",
    "coreset",
    "vaal",
    "qbc",
)
MC_STRATEGIES = ("maxent", "bald")
LR_SCHEDULES = ("constant", "imagenet-base", "imagenet-al")
NOISE_MODES = ("reassign", "shuffle")
IMBALANCE_SCOPES = ("pool", "initial")


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "adam"  # adam | sgd
    lr: float = 5e-4
    base_lr: float | None = None  # base-classifier override (cifar100 uses 5e-5)
    weight_decay: float = 5e-4
    epochs: int = 100
    batch_size: int = 128
    lr_schedule: str = "constant"
    momentum: float = 0.9  # sgd only


@dataclass(frozen=True)
class RegularizationConfig:
    ra_enabled: bool = False
    ra_n: int = 1
    ra_m: int = 5
    swa_enabled: bool = False
    swa_lr: float = 5e-4
    swa_frequency: int = 50
    swa_epochs: int = 50  # length of the trailing snapshot phase


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_id: str = "cifar10"
    architecture_id: str = "vgg16bn"
    strategy_id: str = "random"
    initial_label_fraction: float = 0.1
    budget_fraction: float = 0.1
    num_al_iterations: int = 3
    val_fraction: float = 0.1
    seeds: tuple[int, ...] = (0,)
    initial_fold_ids: tuple[int, ...] = (0,)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    oracle_noise_fraction: float = 0.0
    noise_mode: str = "reassign"  # reassign | shuffle
    imbalance_enabled: bool = False
    imbalance_scope: str = "pool"  # pool: whole train pool; initial: L0 only
    mc_passes: int = 25
    committee_size: int = 5
    retrain_from_scratch: bool = True

    def violations(self) -> list[str]:
        """Every invariant breach, phrased for the user."""
        v = []
        if self.dataset_id not in DATASET_IDS and not SYNTHETIC_ID_RE.match(self.dataset_id):
            v.append(
                f"dataset_id {self.dataset_id!r} not in {DATASET_IDS} "
                "and not of the form synthetic-<n>-<classes>"
            )
        if self.architecture_id not in ARCHITECTURE_IDS:
            v.append(f"architecture_id {self.architecture_id!r} not in {ARCHITECTURE_IDS}")
        if self.strategy_id not in STRATEGY_IDS:
            v.append(f"strategy_id {self.strategy_id!r} not in {STRATEGY_IDS}")
        for name in ("initial_label_fraction", "budget_fraction", "val_fraction"):
            x = getattr(self, name)
            if not (0.0 < x < 1.0):
                v.append(f"{name}={x} must lie in (0, 1)")
        budget_total = (
            self.initial_label_fraction
            + self.num_al_iterations * self.budget_fraction
        )
        if budget_total > 1.0 - self.val_fraction + 1e-12:
            v.append(
                f"initial_label_fraction + num_al_iterations*budget_fraction = "
                f"{budget_total:g} exceeds 1 - val_fraction = "
                f"{1.0 - self.val_fraction:g} (budget would exhaust the pool)"
            )
        if self.num_al_iterations < 0:
            v.append("num_al_iterations must be >= 0")
        if not self.seeds:
            v.append("seeds must be non-empty")
        if not self.initial_fold_ids:
            v.append("initial_fold_ids must be non-empty")
        if not (0.0 <= self.oracle_noise_fraction <= 1.0):
            v.append(f"oracle_noise_fraction={self.oracle_noise_fraction} must lie in [0, 1]")
        if self.noise_mode not in NOISE_MODES:
            v.append(f"noise_mode {self.noise_mode!r} not in {NOISE_MODES}")
        if self.imbalance_scope not in IMBALANCE_SCOPES:
            v.append(f"imbalance_scope {self.imbalance_scope!r} not in {IMBALANCE_SCOPES}")
        if self.mc_passes < 1:
            v.append("mc_passes must be >= 1")
        if self.strategy_id == "bald" and self.mc_passes < 2:
            v.append("strategy bald requires mc_passes >= 2")
        if self.strategy_id == "qbc" and self.committee_size < 2:
            v.append("strategy qbc requires committee_size >= 2")
        opt = self.optimizer
        if opt.name not in ("adam", "sgd"):
            v.append(f"optimizer.name {opt.name!r} not in ('adam', 'sgd')")
        if opt.lr <= 0:
            v.append("optimizer.lr must be > 0")
        if opt.base_lr is not None and opt.base_lr <= 0:
            v.append("optimizer.base_lr must be > 0 when set")
        if opt.epochs < 1:
            v.append("optimizer.epochs must be >= 1")
        if opt.batch_size < 1:
            v.append("optimizer.batch_size must be >= 1")
        if opt.lr_schedule not in LR_SCHEDULES:
            v.append(f"optimizer.lr_schedule {opt.lr_schedule!r} not in {LR_SCHEDULES}")
        reg = self.regularization
        if reg.ra_n < 1:
            v.append("regularization.ra_n must be >= 1")
        if not (0 <= reg.ra_m <= 10):
            v.append("regularization.ra_m must lie in [0, 10]")
        if reg.swa_frequency < 1:
            v.append("regularization.swa_frequency must be >= 1")
        if reg.swa_epochs < 1:
            v.append("regularization.swa_epochs must be >= 1")
        return v

    def validate(self) -> "ExperimentConfig":
        v = self.violations()
        if v:
            raise ConfigError(v)
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["initial_fold_ids"] = list(self.initial_fold_ids)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            opt = OptimizerConfig(**d.pop("optimizer"))
            reg = RegularizationConfig(**d.pop("regularization"))
            d["seeds"] = tuple(d["seeds"])
            d["initial_fold_ids"] = tuple(d["initial_fold_ids"])
            return cls(optimizer=opt, regularization=reg, **d)
        except (KeyError, TypeError) as exc:
            raise ConfigError([f"malformed config dict: {exc}"]) from exc

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)


def canonical_bytes(config: ExperimentConfig) -> bytes:
    """Canonical serialization: sorted keys, 2-space indent, trailing newline."""
    text = json.dumps(config.to_dict(), sort_keys=True, indent=2)
    return (text + "\n").encode("utf-8")


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the canonical bytes; a function of content only."""
    return hashlib.sha256(canonical_bytes(config)).hexdigest()


def snapshot_config(config: ExperimentConfig, out_path) -> str:
    """Validate, write the canonical snapshot, return its content hash."""
    config.validate()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    data = canonical_bytes(config)
    out_path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_config(path) -> ExperimentConfig:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config file {path} is not valid JSON: {exc}"]) from exc
    return ExperimentConfig.from_dict(d).validate()


def synthetic_dataset_params(dataset_id: str) -> tuple[int, int]:
    """(n_samples, n_classes) encoded in a synthetic-<n>-<classes> token."""
    m = SYNTHETIC_ID_RE.match(dataset_id)
    if not m:
        raise ConfigError([f"{dataset_id!r} is not a synthetic dataset id"])
    return int(m.group(1)), int(m.group(2))


def default_config(dataset_id: str, **overrides) -> ExperimentConfig:
    """Dataset presets for optimizer and augmentation hyperparameters.

    cifar10: Adam lr 5e-4 wd 5e-4.  cifar100: Adam lr 5e-4 wd 0 for AL
    iterations, lr 5e-5 for the base classifier.  Synthetic datasets get
    smallcnn-friendly short schedules for desk-scale runs.
    """
    if dataset_id == "cifar10":
        cfg = ExperimentConfig(
            dataset_id="cifar10",
            optimizer=OptimizerConfig(name="adam", lr=5e-4, weight_decay=5e-4, epochs=100),
            regularization=RegularizationConfig(ra_n=1, ra_m=5),
        )
    elif dataset_id == "cifar100":
        cfg = ExperimentConfig(
            dataset_id="cifar100",
            optimizer=OptimizerConfig(
                name="adam", lr=5e-4, base_lr=5e-5, weight_decay=0.0, epochs=100
            ),
            regularization=RegularizationConfig(ra_n=1, ra_m=2),
        )
    elif SYNTHETIC_ID_RE.match(dataset_id):
        cfg = ExperimentConfig(
            dataset_id=dataset_id,
            architecture_id="smallcnn",
            optimizer=OptimizerConfig(
                name="adam", lr=1e-3, weight_decay=0.0, epochs=8, batch_size=64
            ),
            regularization=RegularizationConfig(
                ra_n=1, ra_m=5, swa_lr=1e-3, swa_frequency=2, swa_epochs=4
            ),
            mc_passes=10,
            committee_size=3,
        )
    else:
        raise ConfigError([f"no preset for dataset_id {dataset_id!r}"])
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    return cfg
