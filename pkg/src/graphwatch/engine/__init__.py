"""Minimal float64 autodiff engine and the GMM graph convolution classifier."""
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import Dense, GmmConv, GraphBatch, LayerNorm, dropout, global_mean_pool, layer_norm
from .model import GcnModel, ModelConfig
from .optim import Adam, adam_step
from .tensor import Tensor, TapeError, log_softmax, nll_loss

__all__ = [
    "Adam",
    "Dense",
    "GcnModel",
    "GmmConv",
    "GraphBatch",
    "LayerNorm",
    "ModelConfig",
    "TapeError",
    "Tensor",
    "adam_step",
    "dropout",
    "global_mean_pool",
    "layer_norm",
    "load_checkpoint",
    "log_softmax",
    "nll_loss",
    "save_checkpoint",
]
