"""Minimal differentiable-computation core (float64 numpy tensors)."""

from .gradcheck import GradCheckReport, finite_diff_check
from .layers import (conv_forward, glorot, gru_apply, gru_forward, init_conv, init_gru, init_mlp, mlp_apply,
                     mlp_forward)
from .optim import AdamState, adam_step, backward, clip_by_global_norm, global_norm
from .params import ParameterSet
from .tensor import Tensor, as_tensor, grad

__all__ = [
    "AdamState", "GradCheckReport", "ParameterSet", "Tensor", "adam_step", "as_tensor", "backward",
    "clip_by_global_norm", "conv_forward", "finite_diff_check", "glorot", "grad", "gru_apply", "gru_forward",
    "global_norm", "init_conv", "init_gru", "init_mlp", "mlp_apply", "mlp_forward",
]
