"""Minimal reverse-mode differentiation over numpy arrays."""
from . import ops
from .checkpoint import load_tensors, save_tensors
from .gradcheck import finite_diff_check
from .node import Node, NumericError, as_node, backward, no_grad, set_debug
from .optim import ExponentialLR, OptimState, adamw_step, exp_lr_step

__all__ = [
    "ExponentialLR", "Node", "NumericError", "OptimState", "adamw_step", "as_node",
    "backward", "exp_lr_step", "finite_diff_check", "load_tensors", "no_grad", "ops",
    "save_tensors", "set_debug",
]
