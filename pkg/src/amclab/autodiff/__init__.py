from .gradcheck import finite_diff_grad, relative_error
from .ops import (
    activation,
    add,
    conv1d,
    dense,
    matmul,
    max_pool1d,
    mean_time,
    mean_var_pool,
    mul,
    reduce_sum,
    relu,
    reshape,
    scale,
    scaled_dot_attention,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    transpose,
)
from .tensor import Parameter, ShapeError, Tape, Tensor, active_tape, backward

__all__ = [
    "Parameter",
    "ShapeError",
    "Tape",
    "Tensor",
    "active_tape",
    "activation",
    "add",
    "backward",
    "conv1d",
    "dense",
    "finite_diff_grad",
    "matmul",
    "max_pool1d",
    "mean_time",
    "mean_var_pool",
    "mul",
    "relative_error",
    "reduce_sum",
    "relu",
    "reshape",
    "scale",
    "scaled_dot_attention",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
    "transpose",
]
