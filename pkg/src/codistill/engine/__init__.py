"""Reverse-mode autodiff engine: tensors, primitive ops, gradient checking."""

from .tensor import Parameter, Tensor, as_tensor, is_grad_enabled, nan_guard, no_grad
from .ops import (
    add,
    concat,
    conv2d,
    div,
    exp,
    gelu,
    getitem,
    group_norm,
    l2_normalize,
    layer_norm,
    linear,
    log,
    log_softmax_lastdim,
    matmul,
    mean,
    mul,
    neg,
    reshape,
    softmax_lastdim,
    sqrt,
    sub,
    sum,
    transpose,
    weight_norm_linear,
)
from .gradcheck import GradCheckReport, grad_check

__all__ = [
    "Parameter",
    "Tensor",
    "as_tensor",
    "is_grad_enabled",
    "nan_guard",
    "no_grad",
    "add",
    "concat",
    "conv2d",
    "div",
    "exp",
    "gelu",
    "getitem",
    "group_norm",
    "l2_normalize",
    "layer_norm",
    "linear",
    "log",
    "log_softmax_lastdim",
    "matmul",
    "mean",
    "mul",
    "neg",
    "reshape",
    "softmax_lastdim",
    "sqrt",
    "sub",
    "sum",
    "transpose",
    "weight_norm_linear",
    "GradCheckReport",
    "grad_check",
]
