"""Training and inference for task models.

Randomness is split by source: torch's global generator (seeded per call)
drives weight init and dropout masks, while a numpy generator drives batch
order and augmentation.  Re-running with the same seeds and data yields
bit-identical models on the same platform.

The returned model is the best-on-validation checkpoint, except when
weight averaging is enabled: then the averaged model (with recalibrated
batch-norm statistics) is the final product.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from ..config import MC_STRATEGIES, ExperimentConfig
from ..errors import TrainingDivergedError
from ..regularization import (
    RandAugmentPolicy,
    SWAAccumulator,
    apply_randaugment,
    recalibrate_bn,
    swa_schedule_from_config,
)
from ..views import EmbeddingMatrix, PredictionTensor
from .architectures import build_model

_WARMUP_EPOCHS = 5
_BASE_MILESTONES = (140, 160, 180)
_AL_MILESTONES = (35, 55, 80)


@dataclass
class TrainReport:
    """What happened during one training run."""

    epochs_run: int
    best_epoch: int
    best_val_accuracy: float
    final_val_accuracy: float
    swa_snapshots: int = 0
    epoch_losses: list[float] = field(default_factory=list)


def dropout_for(config: ExperimentConfig) -> float:
    """vgg16bn always carries its dropout head; the others only need one
    when an MC-dropout strategy will sample from it."""
    if config.architecture_id == "vgg16bn" or config.strategy_id in MC_STRATEGIES:
        return 0.5
    return 0.0


def schedule_factor(schedule: str, epoch: int) -> float:
    """Multiplier on the base learning rate for a 1-based epoch."""
    if schedule == "constant":
        return 1.0
    factor = 1.0
    if schedule == "imagenet-base":
        if epoch <= _WARMUP_EPOCHS:
            return epoch / _WARMUP_EPOCHS
        milestones = _BASE_MILESTONES
    elif schedule == "imagenet-al":
        milestones = _AL_MILESTONES
    else:
        raise ValueError(f"unknown lr schedule {schedule!r}")
    for m in milestones:
        if epoch > m:
            factor *= 0.1
    return factor


def to_input_tensor(images: np.ndarray, device) -> torch.Tensor:
    """uint8 NHWC -> float32 NCHW in [0, 1]."""
    x = torch.from_numpy(np.ascontiguousarray(images)).to(device)
    return x.permute(0, 3, 1, 2).float().div_(255.0)


def _augment_images(
    images: np.ndarray,
    preset: str,
    ra_policy: RandAugmentPolicy | None,
    rng: np.random.Generator,
) -> np.ndarray:
    if preset == "none" and ra_policy is None:
        return images
    out = np.empty_like(images)
    pad = 4
    for i, img in enumerate(images):
        if preset in ("flip", "crop-flip") and rng.random() < 0.5:
            img = img[:, ::-1]
        if preset == "crop-flip":
            h, w = img.shape[:2]
            padded = np.pad(img, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")
            top = int(rng.integers(0, 2 * pad + 1))
            left = int(rng.integers(0, 2 * pad + 1))
            img = padded[top : top + h, left : left + w]
        if ra_policy is not None:
            img = apply_randaugment(np.ascontiguousarray(img), ra_policy, rng)
        out[i] = img
    return out


def _batch_starts(n: int, batch_size: int):
    return range(0, n, batch_size)


def evaluate_accuracy(
    model: nn.Module,
    images: np.ndarray,
    labels: np.ndarray,
    batch_size: int = 256,
    device="cpu",
) -> float:
    if len(images) == 0:
        raise ValueError("cannot evaluate on an empty set")
    model.eval()
    correct = 0
    with torch.no_grad():
        for s in _batch_starts(len(images), batch_size):
            x = to_input_tensor(images[s : s + batch_size], device)
            pred = model(x).argmax(dim=1).cpu().numpy()
            correct += int((pred == labels[s : s + batch_size]).sum())
    return correct / len(images)


def train_task_model(
    images: np.ndarray,
    train_indices: np.ndarray,
    train_labels: np.ndarray,
    val_indices: np.ndarray,
    val_labels: np.ndarray,
    num_classes: int,
    config: ExperimentConfig,
    torch_seed: int,
    augment_rng: np.random.Generator,
    augment_preset: str = "none",
    lr: float | None = None,
    class_weight: np.ndarray | None = None,
    device="cpu",
) -> tuple[nn.Module, TrainReport]:
    """Train a fresh model on (train_indices, train_labels).

    ``train_labels`` is aligned with ``train_indices`` and may differ from
    ground truth (noisy oracle); validation labels are always clean.
    """
    if len(train_indices) != len(train_labels):
        raise ValueError("train_indices and train_labels must align")
    opt_cfg = config.optimizer
    reg = config.regularization
    base_lr = lr if lr is not None else opt_cfg.lr

    torch.manual_seed(torch_seed)
    model = build_model(config.architecture_id, num_classes, dropout_for(config)).to(device)

    if opt_cfg.name == "adam":
        optimizer = torch.optim.Adam(
            model.parameters(), lr=base_lr, weight_decay=opt_cfg.weight_decay
        )
    else:
        optimizer = torch.optim.SGD(
            model.parameters(),
            lr=base_lr,
            momentum=opt_cfg.momentum,
            weight_decay=opt_cfg.weight_decay,
        )

    weight_t = None
    if class_weight is not None:
        weight_t = torch.as_tensor(class_weight, dtype=torch.float32, device=device)
    loss_fn = nn.CrossEntropyLoss(weight=weight_t)

    ra_policy = (
        RandAugmentPolicy(num_ops=reg.ra_n, magnitude=reg.ra_m) if reg.ra_enabled else None
    )
    swa = swa_schedule_from_config(opt_cfg.epochs, reg)
    swa_acc = SWAAccumulator() if swa else None

    train_images = images[train_indices]
    train_labels = np.asarray(train_labels, dtype=np.int64)
    val_images = images[val_indices]

    n = len(train_indices)
    batch = opt_cfg.batch_size
    best_acc, best_epoch, best_state = -1.0, 0, None
    losses = []

    for epoch in range(1, opt_cfg.epochs + 1):
        if swa and swa.in_averaging_phase(epoch):
            lr_now = swa.swa_lr
        else:
            lr_now = base_lr * schedule_factor(opt_cfg.lr_schedule, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr_now

        model.train()
        perm = augment_rng.permutation(n)
        epoch_loss = 0.0
        for s in _batch_starts(n, batch):
            take = perm[s : s + batch]
            xb = _augment_images(train_images[take], augment_preset, ra_policy, augment_rng)
            x = to_input_tensor(xb, device)
            y = torch.from_numpy(train_labels[take]).to(device)
            logits = model(x)
            loss = loss_fn(logits, y)
            if not math.isfinite(loss.item()):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} (lr={lr_now:g})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item() * len(take)
        losses.append(epoch_loss / n)

        val_acc = evaluate_accuracy(model, val_images, val_labels, device=device)
        if val_acc > best_acc:
            best_acc, best_epoch = val_acc, epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

        if swa and swa.is_snapshot_epoch(epoch):
            swa_acc.add(model)

    if swa:
        if swa_acc.count == 0:
            raise TrainingDivergedError("weight-averaging phase produced no snapshots")
        swa_acc.load_average_into(model)
        recalibrate_bn(
            model,
            (
                to_input_tensor(train_images[s : s + batch], device)
                for s in _batch_starts(n, batch)
            ),
        )
        final_acc = evaluate_accuracy(model, val_images, val_labels, device=device)
    else:
        model.load_state_dict(best_state)
        final_acc = best_acc

    report = TrainReport(
        epochs_run=opt_cfg.epochs,
        best_epoch=best_epoch,
        best_val_accuracy=best_acc,
        final_val_accuracy=final_acc,
        swa_snapshots=swa_acc.count if swa_acc else 0,
        epoch_losses=losses,
    )
    return model, report


def predict_proba(
    model: nn.Module,
    images: np.ndarray,
    indices: np.ndarray,
    batch_size: int = 256,
    device="cpu",
) -> PredictionTensor:
    """Single deterministic softmax pass over ``indices``; shape [1, N, C]."""
    model.eval()
    rows = []
    with torch.no_grad():
        for s in _batch_starts(len(indices), batch_size):
            x = to_input_tensor(images[indices[s : s + batch_size]], device)
            rows.append(torch.softmax(model(x), dim=1).double().cpu().numpy())
    probs = np.concatenate(rows) if rows else np.empty((0, model.num_classes))
    return PredictionTensor(probs[None, :, :], np.asarray(indices, dtype=np.int64))


def _set_mc_dropout_mode(model: nn.Module) -> int:
    """Eval everywhere except dropout; returns how many dropouts were armed."""
    model.eval()
    armed = 0
    for m in model.modules():
        if isinstance(m, nn.Dropout):
            m.train()
            armed += 1
    return armed


def mc_dropout_predict(
    model: nn.Module,
    images: np.ndarray,
    indices: np.ndarray,
    passes: int,
    torch_seed: int,
    batch_size: int = 256,
    device="cpu",
) -> PredictionTensor:
    """``passes`` stochastic forward passes with live dropout, frozen BN."""
    if passes < 1:
        raise ValueError("passes must be >= 1")
    if _set_mc_dropout_mode(model) == 0:
        raise ValueError("model has no dropout module; MC sampling would be deterministic")
    if not any(p > 0 for p in (m.p for m in model.modules() if isinstance(m, nn.Dropout))):
        raise ValueError("all dropout probabilities are zero; MC sampling would be deterministic")
    torch.manual_seed(torch_seed)
    stack = []
    with torch.no_grad():
        for _ in range(passes):
            rows = []
            for s in _batch_starts(len(indices), batch_size):
                x = to_input_tensor(images[indices[s : s + batch_size]], device)
                rows.append(torch.softmax(model(x), dim=1).double().cpu().numpy())
            stack.append(np.concatenate(rows))
    model.eval()
    return PredictionTensor(np.stack(stack), np.asarray(indices, dtype=np.int64))


def penultimate_embeddings(
    model: nn.Module,
    images: np.ndarray,
    indices: np.ndarray,
    batch_size: int = 256,
    device="cpu",
) -> EmbeddingMatrix:
    model.eval()
    rows = []
    with torch.no_grad():
        for s in _batch_starts(len(indices), batch_size):
            x = to_input_tensor(images[indices[s : s + batch_size]], device)
            rows.append(model.features(x).double().cpu().numpy())
    values = np.concatenate(rows) if rows else np.empty((0, model.embedding_dim))
    return EmbeddingMatrix(values, np.asarray(indices, dtype=np.int64))
