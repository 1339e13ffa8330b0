from .architectures import ARCHITECTURE_EMBEDDING_DIMS, BackboneClassifier, build_model
from .engine import (
    TrainReport,
    evaluate_accuracy,
    mc_dropout_predict,
    penultimate_embeddings,
    predict_proba,
    train_task_model,
)

__all__ = [
    "ARCHITECTURE_EMBEDDING_DIMS",
    "BackboneClassifier",
    "build_model",
    "TrainReport",
    "evaluate_accuracy",
    "mc_dropout_predict",
    "penultimate_embeddings",
    "predict_proba",
    "train_task_model",
]
