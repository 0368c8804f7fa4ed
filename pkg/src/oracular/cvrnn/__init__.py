"""Convolutional-variational recurrent model in plain numpy."""

from .checkpoint import CheckpointError, load, save
from .layers import GruCell, ShapeMismatch, gru_step
from .model import (
    CvrnnParams,
    DropoutMasks,
    ElboBreakdown,
    LatentGaussian,
    ModelConfig,
    backprop,
    cnn_forward,
    decode_sequence,
    elbo_loss,
    encode,
    generate,
    init_params,
    latent_params,
    reparameterize,
    zero_params,
)
from .train import AdamState, EmptyCorpus, NoFullBatch, TrainingConfig, adam_update, clip_gradients, train

__all__ = [
    "AdamState", "CheckpointError", "CvrnnParams", "DropoutMasks", "ElboBreakdown", "EmptyCorpus",
    "GruCell", "LatentGaussian", "ModelConfig", "NoFullBatch", "ShapeMismatch", "TrainingConfig",
    "adam_update", "backprop", "clip_gradients", "cnn_forward", "decode_sequence", "elbo_loss",
    "encode", "generate", "gru_step", "init_params", "latent_params", "load", "reparameterize",
    "save", "train", "zero_params",
]
