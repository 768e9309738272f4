"""Sparse autoencoder built from numpy primitives."""

from .arch import ArchSpec, Conv2D, Dense, Flatten, cube_architecture, infer_shapes, map_architecture
from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    ForwardResult,
    LatentVector,
    LossValues,
    SaeModel,
    backward,
    encode,
    encode_batch,
    forward,
    init_model,
    loss_gradients,
    sae_loss,
)
from .optim import AdamState, adam_step
from .train import EpochRecord, ImprovementTracker, TrainConfig, TrainResult, evaluate, train

__all__ = [
    "ArchSpec",
    "Conv2D",
    "Dense",
    "Flatten",
    "cube_architecture",
    "map_architecture",
    "infer_shapes",
    "SaeModel",
    "LatentVector",
    "ForwardResult",
    "LossValues",
    "init_model",
    "forward",
    "backward",
    "encode",
    "encode_batch",
    "sae_loss",
    "loss_gradients",
    "AdamState",
    "adam_step",
    "TrainConfig",
    "TrainResult",
    "EpochRecord",
    "ImprovementTracker",
    "train",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
]
