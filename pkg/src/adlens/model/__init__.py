from .config import ModelConfig, StageConfig, TrainConfig
from .scorer import Batch, ContentScorer
from .train import evaluate_model, precompute_image_embeddings, pretrain_modality, train_full, train_joint

__all__ = [
    "Batch",
    "ContentScorer",
    "ModelConfig",
    "StageConfig",
    "TrainConfig",
    "evaluate_model",
    "precompute_image_embeddings",
    "pretrain_modality",
    "train_full",
    "train_joint",
]
