"""Projector, restorer, prior noise predictor, condition extractor and checkpoints."""

from .checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from .conditioning import (
    COND_DIM,
    Condition,
    FeatureExtractor,
    condition_dropout,
    condition_tensor,
    cosine,
    extract_condition,
)
from .nets import Projector, ResidualNet, Restorer, projector_forward, restorer_forward
from .prior import (
    NoiseSchedule,
    PriorScore,
    denoising_loss,
    noising,
    prior_eps,
    time_embedding,
    to_latent,
)

__all__ = [
    "COND_DIM", "CheckpointError", "Condition", "FeatureExtractor", "NoiseSchedule",
    "PriorScore", "Projector", "ResidualNet", "Restorer", "condition_dropout", "condition_tensor", "cosine",
    "denoising_loss", "extract_condition", "load_checkpoint", "noising", "prior_eps",
    "projector_forward", "read_checkpoint", "restorer_forward", "save_checkpoint",
    "time_embedding", "to_latent",
]
