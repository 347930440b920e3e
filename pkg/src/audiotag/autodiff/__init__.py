"""Minimal reverse-mode differentiation core and the kernels the models need."""
from . import ops
from .ops import BatchNormState
from .optim import Adam, AdamState, adam_step
from .tensor import ShapeError, Tape, Tensor, backward, current_tape

__all__ = [
    "Adam",
    "AdamState",
    "BatchNormState",
    "ShapeError",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "current_tape",
    "ops",
]
