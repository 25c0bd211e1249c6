from .conv import BACKEND, ConvSpec, get_backend
from .ops import (add, batch_norm, concat_channels, conv2d, conv_transpose2d,
                  group_norm, layer_norm, leaky_relu, merge_time, mse_loss,
                  mul, reshape, split_time, tsum)
from .tensor import Tape, Tensor, default_dtype, no_grad

__all__ = [
    "BACKEND", "ConvSpec", "get_backend",
    "Tensor", "Tape", "no_grad", "default_dtype",
    "add", "mul", "leaky_relu", "reshape", "merge_time", "split_time",
    "concat_channels", "tsum", "mse_loss",
    "conv2d", "conv_transpose2d",
    "layer_norm", "group_norm", "batch_norm",
]
