"""Minimal numpy tensor engine with reverse-mode autodiff."""

from .core import Tape, Tensor, as_tensor, backward, check_finite, is_grad_enabled, no_grad
from .functional import (
    BatchNormState,
    activation,
    batch_norm,
    bce_loss,
    conv2d,
    conv2d_transpose,
    leaky_relu,
    mse_loss,
    relu,
    sigmoid,
    tanh,
)
from .noise import make_rng, sample_gaussian
from .optim import Adam, AdamState, adam_step

__all__ = [
    "Adam", "AdamState", "BatchNormState", "Tape", "Tensor", "activation", "adam_step", "as_tensor",
    "backward", "batch_norm", "bce_loss", "check_finite", "conv2d", "conv2d_transpose", "is_grad_enabled",
    "leaky_relu", "make_rng", "mse_loss", "no_grad", "relu", "sample_gaussian", "sigmoid", "tanh",
]
