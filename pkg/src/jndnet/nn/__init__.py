"""Minimal differentiable layer zoo used by the toy models.

Hot kernels (convolution, pooling) are numba-compiled with a pure-numpy
fallback; see :mod:`jndnet.nn.backend` for the selection rules.
"""

from .backend import KERNEL_BACKEND, set_num_threads
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    BatchNorm,
    Conv2d,
    MaxPool2x2,
    Param,
    ReLU,
    Sequential,
    Softmax,
    SpatialDropout,
    Upsample2x,
    accumulate,
    concat_backward,
    concat_forward,
    softmax_backward,
    softmax_forward,
)
from .losses import focal_loss, mse_loss
from .optim import AdamState, LrSchedule, adam_step, lr_at

__all__ = [
    "KERNEL_BACKEND",
    "set_num_threads",
    "load_checkpoint",
    "save_checkpoint",
    "BatchNorm",
    "Conv2d",
    "MaxPool2x2",
    "Param",
    "ReLU",
    "Sequential",
    "Softmax",
    "SpatialDropout",
    "Upsample2x",
    "accumulate",
    "concat_backward",
    "concat_forward",
    "softmax_backward",
    "softmax_forward",
    "focal_loss",
    "mse_loss",
    "AdamState",
    "LrSchedule",
    "adam_step",
    "lr_at",
]
