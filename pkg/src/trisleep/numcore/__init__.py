from .tensor import (
    LabelError,
    NonFiniteError,
    Parameter,
    ShapeError,
    Tensor,
    concat,
    conv1d,
    cross_entropy_logits,
    default_dtype,
    dropout,
    layer_norm,
    matmul,
    no_grad,
    shadow_dtype,
    softmax_rows,
    take_rows,
    time_interp,
)
from .optim import AdamState, GradientError, adam_step
from .gradcheck import DeterminismError, GradCheckReport, ParamReport, gradcheck
from .random import generator, seed_for

__all__ = [
    "Tensor",
    "Parameter",
    "ShapeError",
    "LabelError",
    "NonFiniteError",
    "matmul",
    "softmax_rows",
    "layer_norm",
    "conv1d",
    "cross_entropy_logits",
    "concat",
    "take_rows",
    "time_interp",
    "dropout",
    "default_dtype",
    "shadow_dtype",
    "no_grad",
    "AdamState",
    "adam_step",
    "GradientError",
    "gradcheck",
    "GradCheckReport",
    "ParamReport",
    "DeterminismError",
    "generator",
    "seed_for",
]
