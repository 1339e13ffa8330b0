"""Weight averaging across the tail of training.

A schedule says which (1-based) epoch completions contribute a snapshot;
the accumulator keeps a running sum of parameters and produces their
arithmetic mean.  Because averaged weights invalidate batch-norm running
statistics, ``recalibrate_bn`` re-estimates them with forward passes over
the labeled data.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from ..config import RegularizationConfig


@dataclass(frozen=True)
class SWASchedule:
    """Snapshot epochs: start_epoch, start_epoch + frequency, ... <= total."""

    total_epochs: int
    start_epoch: int
    frequency: int
    swa_lr: float

    def __post_init__(self):
        if not (1 <= self.start_epoch <= self.total_epochs):
            raise ValueError(
                f"start_epoch {self.start_epoch} outside [1, {self.total_epochs}]"
            )
        if self.frequency < 1:
            raise ValueError("frequency must be >= 1")
        if self.swa_lr <= 0:
            raise ValueError("swa_lr must be > 0")

    def snapshot_epochs(self) -> tuple[int, ...]:
        return tuple(range(self.start_epoch, self.total_epochs + 1, self.frequency))

    def is_snapshot_epoch(self, epoch: int) -> bool:
        return epoch in self.snapshot_epochs()

    def in_averaging_phase(self, epoch: int) -> bool:
        """True once the constant swa_lr replaces the main schedule."""
        return epoch >= self.start_epoch


def swa_schedule_from_config(
    total_epochs: int, reg: RegularizationConfig
) -> SWASchedule | None:
    """Trailing-phase schedule: the last ``swa_epochs`` epochs average."""
    if not reg.swa_enabled:
        return None
    start = total_epochs - reg.swa_epochs
    if start < 1:
        raise ValueError(
            f"swa_epochs {reg.swa_epochs} leaves no pre-averaging epochs "
            f"(total {total_epochs})"
        )
    return SWASchedule(
        total_epochs=total_epochs,
        start_epoch=start,
        frequency=reg.swa_frequency,
        swa_lr=reg.swa_lr,
    )


class SWAAccumulator:
    """Arithmetic mean of model snapshots, accumulated in float64.

    Non-floating buffers (e.g. batch-norm step counters) are not averaged;
    the last snapshot's value wins.
    """

    def __init__(self):
        self._sums: dict[str, torch.Tensor] | None = None
        self._last: dict[str, torch.Tensor] = {}
        self.count = 0

    def add(self, model: torch.nn.Module) -> None:
        state = model.state_dict()
        if self._sums is None:
            self._sums = {
                k: v.detach().to(torch.float64).clone()
                for k, v in state.items()
                if v.is_floating_point()
            }
        else:
            for k, s in self._sums.items():
                s += state[k].detach().to(torch.float64)
        self._last = {
            k: v.detach().clone() for k, v in state.items() if not v.is_floating_point()
        }
        self.count += 1

    def averaged_state_dict(self) -> dict[str, torch.Tensor]:
        if self.count == 0:
            raise ValueError("no snapshots accumulated")
        out = {k: (s / self.count) for k, s in self._sums.items()}
        out.update(self._last)
        return out

    def load_average_into(self, model: torch.nn.Module) -> None:
        avg = self.averaged_state_dict()
        state = model.state_dict()
        cast = {
            k: v.to(state[k].dtype) if v.is_floating_point() else v
            for k, v in avg.items()
        }
        model.load_state_dict(cast)


def recalibrate_bn(model: torch.nn.Module, batches, device=None) -> None:
    """Re-estimate batch-norm running stats by streaming ``batches`` through.

    ``batches`` yields input tensors only.  Uses cumulative averaging
    (momentum None) after a stats reset, so the result is the exact mean
    over everything streamed.
    """
    bn_modules = [
        m
        for m in model.modules()
        if isinstance(m, torch.nn.modules.batchnorm._BatchNorm)
    ]
    if not bn_modules:
        return
    was_training = model.training
    model.train()
    momenta = {}
    for bn in bn_modules:
        bn.reset_running_stats()
        momenta[bn] = bn.momentum
        bn.momentum = None
    with torch.no_grad():
        for x in batches:
            model(x.to(device) if device is not None else x)
    for bn, momentum in momenta.items():
        bn.momentum = momentum
    model.train(was_training)
