"""Deterministic, label-partitioned random streams.

Every source of randomness in a run is drawn from a named stream so that
turning one stochastic component on or off (e.g. augmentation) cannot
perturb the draws of another (e.g. pool sampling).  A stream is fully
determined by ``(seed, label, *subkeys)``.
"""
from __future__ import annotations

import numpy as np

# Fixed stream vocabulary.  The integer ids feed the SeedSequence spawn key,
# so reordering or renaming entries would silently change every stream.
STREAM_LABELS = {
    "init": 0,     # weight initialization, dropout during training
    "augment": 1,  # data order and augmentation draws
    "sample": 2,   # acquisition functions, MC-dropout passes at selection
    "noise": 3,    # oracle label corruption
    "fold": 4,     # train/val/test split and initial labeled folds
}


def make_rng(seed: int, stream_label: str, *subkeys: int) -> np.random.Generator:
    """Return a generator for the ``(seed, stream_label, *subkeys)`` stream.

    Identical arguments always yield an identical stream; distinct labels
    (or subkeys) yield independent streams.  Subkeys let callers fan a
    stream out per fold / iteration / committee member.
    """
    if stream_label not in STREAM_LABELS:
        raise ValueError(
            f"unknown stream label {stream_label!r}; "
            f"expected one of {sorted(STREAM_LABELS)}"
        )
    key = (STREAM_LABELS[stream_label],) + tuple(int(s) for s in subkeys)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def torch_seed_from(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed for torch's global generator from a stream."""
    return int(rng.integers(0, 2**63 - 1))
