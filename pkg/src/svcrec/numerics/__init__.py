"""Numerical substrate: dense kernels, Adam, finite differences, file formats."""
from .core import (
    ACTIVATIONS,
    activate,
    activation_grad_from_output,
    log_sigmoid,
    matvec,
    scaled_softplus,
    sigmoid,
    softmax_masked,
    softplus,
)
from .fdiff import finite_diff_grad, max_relative_error
from .kernels import BACKEND
from .optim import Adam

__all__ = [
    "ACTIVATIONS", "Adam", "BACKEND", "activate", "activation_grad_from_output",
    "finite_diff_grad", "log_sigmoid", "matvec", "max_relative_error",
    "scaled_softplus", "sigmoid", "softmax_masked", "softplus",
]
