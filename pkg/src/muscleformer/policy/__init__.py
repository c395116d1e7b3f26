"""Muscle transformer policy, action distribution and MLP baseline."""

from .distribution import ActionDistribution, log_prob_numpy, noise_std, noise_std_numpy, squash, unsquash
from .mlp import MLPPolicy, MLPSpec
from .spec import PolicySpec
from .summary import analytic_parameter_count, format_summary, mlp_parameter_count, model_summary
from .tokens import HistoryWindow, TokenBatch, TooManyChannelsError, concat_batches, stack_rows
from .transformer import MuscleTransformer, PolicyOutput

__all__ = [
    "ActionDistribution",
    "HistoryWindow",
    "MLPPolicy",
    "MLPSpec",
    "MuscleTransformer",
    "PolicyOutput",
    "PolicySpec",
    "TokenBatch",
    "TooManyChannelsError",
    "analytic_parameter_count",
    "concat_batches",
    "format_summary",
    "log_prob_numpy",
    "mlp_parameter_count",
    "model_summary",
    "noise_std",
    "noise_std_numpy",
    "squash",
    "stack_rows",
    "unsquash",
]
