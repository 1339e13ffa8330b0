"""Model output views consumed by acquisition functions.

Torch-free containers so samplers stay pure numpy: a stack of
class-probability passes and a matrix of penultimate-layer activations,
each carrying the dataset indices it is aligned with.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_SUM_TOL = 1e-5


@dataclass
class PredictionTensor:
    """Per-sample class probabilities, stacked over stochastic passes.

    ``values`` has shape [S, N, C]: S forward passes (or committee
    members; S=1 for deterministic prediction), N samples in the order of
    ``indices``, C classes.  Every row is a probability vector.
    """

    values: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.values.ndim != 3:
            raise ValueError(f"expected [S, N, C] tensor, got shape {self.values.shape}")
        if self.values.shape[1] != len(self.indices):
            raise ValueError("tensor N axis does not match index count")
        if np.any(self.values < 0):
            raise ValueError("probabilities must be non-negative")
        sums = self.values.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            worst = float(np.abs(sums - 1.0).max())
            raise ValueError(f"rows must sum to 1 within {ROW_SUM_TOL} (worst |err|={worst:g})")

    @property
    def num_passes(self) -> int:
        return self.values.shape[0]

    @property
    def num_classes(self) -> int:
        return self.values.shape[2]


@dataclass
class EmbeddingMatrix:
    """Penultimate-layer activations [N, D], aligned with ``indices``."""

    values: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.values.ndim != 2:
            raise ValueError(f"expected [N, D] matrix, got shape {self.values.shape}")
        if self.values.shape[0] != len(self.indices):
            raise ValueError("embedding row count does not match index count")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embeddings must be finite")

    def rows_for(self, query: np.ndarray) -> np.ndarray:
        """Rows aligned to ``query`` indices (error on unknown index)."""
        pos = {int(i): p for p, i in enumerate(self.indices)}
        try:
            sel = [pos[int(i)] for i in np.asarray(query)]
        except KeyError as exc:
            raise KeyError(f"embedding matrix does not cover index {exc}") from exc
        return self.values[sel]
