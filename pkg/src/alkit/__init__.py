"""Reproducibility-first evaluation toolkit for pool-based active learning.

The library half exposes the loop pieces (partitioning, acquisition
strategies, the training engine, the oracle) so experiments can be
scripted; the ``al`` command drives full runs, transfers, resumption and
statistical reports from the shell.
"""
from .config import ExperimentConfig, config_hash, default_config, load_config
from .errors import ConfigError, IndexSetError, TrainingDivergedError
from .orchestrator import replay_transfer, run_al_cell, run_suite
from .reporting import emit_report, load_experiment

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "IndexSetError",
    "TrainingDivergedError",
    "config_hash",
    "default_config",
    "emit_report",
    "load_config",
    "load_experiment",
    "replay_transfer",
    "run_al_cell",
    "run_suite",
    "__version__",
]
