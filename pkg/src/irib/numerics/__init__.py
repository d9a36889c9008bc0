"""Float64 tensors with reverse-mode autodiff, image ops and a gradient oracle."""

from . import backend
from .gradcheck import NondeterministicFunction, finite_diff_check, relative_error
from .ops import (
    blur_radius,
    concat,
    conv2d,
    filter2d,
    gaussian_blur,
    gaussian_kernel2d,
    mse,
    pad_reflect,
    resize_bilinear,
    resize_nearest,
    separable_linear,
    soft_round,
    stack,
)
from .optim import OPTIMIZERS, SGD, Adam, make_optimizer
from .tensor import (
    GradTape,
    Parameter,
    ShapeError,
    Tensor,
    active_tape,
    as_tensor,
    backward,
    is_grad_enabled,
    no_grad,
)

__all__ = [
    "Adam", "GradTape", "NondeterministicFunction", "OPTIMIZERS", "Parameter", "SGD", "make_optimizer", "ShapeError", "Tensor",
    "active_tape", "as_tensor", "backend", "backward", "blur_radius", "concat", "conv2d",
    "filter2d", "finite_diff_check", "gaussian_blur", "gaussian_kernel2d", "is_grad_enabled",
    "mse", "no_grad", "pad_reflect", "relative_error", "resize_bilinear", "resize_nearest",
    "separable_linear", "soft_round", "stack",
]
