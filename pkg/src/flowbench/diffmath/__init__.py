"""Minimal dense numerics with reverse-mode differentiation."""
from .kernels import (DEFAULT_MODES, activation, batch_norm, conv2d, gelu, linear, matmul,
                      max_pool2d, relu, spectral_conv, spectral_modes, standardize, tanh, upconv2x2)
from .optim import AdamState, adam_step
from .tensor import (Tape, Tensor, abs_, active_tape, as_tensor, backward, broadcast_to, concat,
                     exp, no_grad, pad, parameter, sqrt, square, stack)

__all__ = [
    "AdamState", "DEFAULT_MODES", "Tape", "Tensor", "abs_", "activation", "active_tape", "adam_step",
    "as_tensor", "backward", "batch_norm", "broadcast_to", "concat", "conv2d", "exp", "gelu", "linear",
    "matmul", "max_pool2d", "no_grad", "pad", "parameter", "relu", "spectral_conv", "spectral_modes",
    "sqrt", "square", "stack", "standardize", "tanh", "upconv2x2",
]
