"""Inverse-frequency class weights for the training loss."""
from __future__ import annotations

import numpy as np


def class_weights(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Per-class weights proportional to 1/count, normalized to mean 1.

    Mean-1 normalization keeps the weighted loss on the same scale as the
    unweighted one, so learning rates need no retuning when imbalance
    handling is switched on.  Classes absent from ``labels`` get the
    weight of a singleton class; they contribute no loss terms anyway.
    """
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError("labels outside [0, num_classes)")
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    inv = 1.0 / np.maximum(counts, 1.0)
    return inv * (num_classes / inv.sum())
