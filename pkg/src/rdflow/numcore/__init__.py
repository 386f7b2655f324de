"""float64 autodiff engine, layers, and optimizer."""

from .nn import Linear, Mlp, Module, glorot_uniform
from .optim import AdamW, CosineSchedule
from .tensor import (
    Tensor,
    abs_,
    add,
    backward,
    concat,
    cos,
    diag_part,
    div,
    elu,
    exp,
    getitem,
    grad_enabled,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    pow_const,
    reshape,
    scatter_rows,
    sin,
    softmax_rows,
    sqrt,
    sub,
    sum_,
    take_rows,
    transpose,
    zero_grads,
)

__all__ = [
    "Tensor", "no_grad", "grad_enabled", "backward", "zero_grads",
    "add", "sub", "neg", "mul", "div", "pow_const", "sqrt", "abs_", "exp",
    "elu", "sin", "cos", "matmul", "transpose", "reshape", "diag_part",
    "sum_", "mean", "concat", "getitem", "take_rows", "scatter_rows",
    "softmax_rows",
    "Module", "Linear", "Mlp", "glorot_uniform",
    "AdamW", "CosineSchedule",
]
