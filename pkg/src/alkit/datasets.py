"""Dataset loading: deterministic synthetic data plus CIFAR-10/100.

The toolkit never downloads data; CIFAR is read from ``AL_DATA_ROOT``
(torchvision layout).  Synthetic datasets are generated deterministically
from their id alone, so ``synthetic-2000-10`` means the same 2000 images
on every machine.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .config import SYNTHETIC_ID_RE, synthetic_dataset_params

DATA_ROOT_ENV = "AL_DATA_ROOT"

# Fixed entropy prefix for synthetic image generation; independent of any
# run seed so the dataset is "the world", not part of run randomness.
_SYNTHETIC_WORLD_SEED = 0x5EED_DA7A


@dataclass
class Dataset:
    """In-memory image classification dataset."""

    dataset_id: str
    images: np.ndarray  # uint8 [N, H, W, 3]
    labels: np.ndarray  # int64 [N], ground truth
    num_classes: int
    provided_test_indices: np.ndarray | None = None  # dataset-shipped test split
    augment_preset: str = "none"  # none | flip | crop-flip

    def __len__(self) -> int:
        return len(self.images)


def _smooth_field(rng: np.random.Generator, size: int, cells: int = 8) -> np.ndarray:
    """Low-frequency random field in [0, 1] via bilinear upsampling."""
    coarse = rng.random((cells, cells))
    xs = np.linspace(0, cells - 1, size)
    x0 = np.floor(xs).astype(int)
    x1 = np.minimum(x0 + 1, cells - 1)
    t = xs - x0
    rows = coarse[x0][:, x0] * np.outer(1 - t, 1 - t)
    rows += coarse[x0][:, x1] * np.outer(1 - t, t)
    rows += coarse[x1][:, x0] * np.outer(t, 1 - t)
    rows += coarse[x1][:, x1] * np.outer(t, t)
    return rows


def make_synthetic(n: int, num_classes: int, image_size: int = 32, noise_std: float = 48.0) -> Dataset:
    """Class-templated noisy images, deterministic in (n, num_classes, size).

    Each class has a smooth random RGB template; samples are the template
    plus pixel noise.  Learnable by a small CNN in a few epochs but noisy
    enough that accuracy grows with labeled-set size.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence([_SYNTHETIC_WORLD_SEED, n, num_classes, image_size])
    )
    templates = np.stack(
        [
            np.stack([_smooth_field(rng, image_size) for _ in range(3)], axis=-1)
            for _ in range(num_classes)
        ]
    )  # [C, H, W, 3] in [0, 1]
    templates = 40.0 + 175.0 * templates
    labels = rng.integers(0, num_classes, size=n)
    noise = rng.normal(0.0, noise_std, size=(n, image_size, image_size, 3))
    images = np.clip(templates[labels] + noise, 0, 255).astype(np.uint8)
    return Dataset(
        dataset_id=f"synthetic-{n}-{num_classes}",
        images=images,
        labels=labels.astype(np.int64),
        num_classes=num_classes,
        augment_preset="none",
    )


def make_toy_linear(n: int = 200, image_size: int = 16) -> Dataset:
    """Two classes separable by mean brightness; sanity floor for training."""
    rng = np.random.default_rng(np.random.SeedSequence([_SYNTHETIC_WORLD_SEED, 2, n]))
    labels = (np.arange(n) % 2).astype(np.int64)
    base = np.where(labels == 0, 60.0, 180.0)[:, None, None, None]
    images = np.clip(
        base + rng.normal(0.0, 20.0, size=(n, image_size, image_size, 3)), 0, 255
    ).astype(np.uint8)
    return Dataset(
        dataset_id=f"toy-linear-{n}",
        images=images,
        labels=labels,
        num_classes=2,
        augment_preset="none",
    )


def _load_cifar(dataset_id: str, data_root: str | None) -> Dataset:
    import torchvision.datasets as tvd  # optional dependency

    root = data_root or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise FileNotFoundError(
            f"{dataset_id} requires a data root; set ${DATA_ROOT_ENV} or pass --data-root"
        )
    cls = tvd.CIFAR10 if dataset_id == "cifar10" else tvd.CIFAR100
    train = cls(root, train=True, download=False)
    test = cls(root, train=False, download=False)
    images = np.concatenate([train.data, test.data]).astype(np.uint8)
    labels = np.concatenate([train.targets, test.targets]).astype(np.int64)
    test_indices = np.arange(len(train.data), len(images), dtype=np.int64)
    return Dataset(
        dataset_id=dataset_id,
        images=images,
        labels=labels,
        num_classes=10 if dataset_id == "cifar10" else 100,
        provided_test_indices=test_indices,
        augment_preset="flip" if dataset_id == "cifar10" else "crop-flip",
    )


def load_dataset(dataset_id: str, data_root: str | None = None) -> Dataset:
    if dataset_id in ("cifar10", "cifar100"):
        return _load_cifar(dataset_id, data_root)
    if SYNTHETIC_ID_RE.match(dataset_id):
        n, num_classes = synthetic_dataset_params(dataset_id)
        return make_synthetic(n, num_classes)
    raise ValueError(f"unknown dataset_id {dataset_id!r}")
