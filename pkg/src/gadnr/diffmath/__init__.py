from .gaussian import empirical_moments, gaussian_kl, gaussian_kl_rows, gaussian_kl_samples, target_logdet
from .gradcheck import grad_check
from .hungarian import hungarian_min_cost
from .tensor import (
    DTensor,
    Tape,
    TapeError,
    add,
    add_bias_row,
    as_tensor,
    backward,
    clamp,
    current_tape,
    custom_op,
    exp,
    gather_rows,
    group_cov,
    group_mean,
    matmul,
    mse,
    mul,
    new_default_tape,
    no_grad,
    relu,
    reshape,
    row_sq_dist,
    row_sum,
    scale,
    sparse_matmul,
    sub,
    tanh,
    total,
    zero_grad,
)

__all__ = [
    "DTensor",
    "Tape",
    "TapeError",
    "add",
    "add_bias_row",
    "as_tensor",
    "backward",
    "clamp",
    "current_tape",
    "custom_op",
    "empirical_moments",
    "exp",
    "gather_rows",
    "gaussian_kl",
    "gaussian_kl_rows",
    "gaussian_kl_samples",
    "grad_check",
    "group_cov",
    "group_mean",
    "hungarian_min_cost",
    "matmul",
    "mse",
    "mul",
    "new_default_tape",
    "no_grad",
    "relu",
    "reshape",
    "row_sq_dist",
    "row_sum",
    "scale",
    "sparse_matmul",
    "sub",
    "tanh",
    "target_logdet",
    "total",
    "zero_grad",
]
