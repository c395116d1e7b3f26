"""Minimal reverse-mode differentiation over numpy."""

from . import ops
from .gradcheck import GradCheckReport, grad_check, relative_error
from .optim import Adam, AdamState, adam_step, clip_grad_norm, global_grad_norm
from .tensor import (
    Tape,
    Tensor,
    as_tensor,
    backward,
    debug_mode,
    default_dtype,
    get_tape,
    grad_enabled,
    no_grad,
    precision,
    record,
    set_default_dtype,
)

__all__ = [
    "Adam",
    "AdamState",
    "GradCheckReport",
    "Tape",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "clip_grad_norm",
    "debug_mode",
    "default_dtype",
    "get_tape",
    "global_grad_norm",
    "grad_check",
    "grad_enabled",
    "no_grad",
    "ops",
    "precision",
    "record",
    "relative_error",
    "set_default_dtype",
]
