"""PPO, imitation, value and entropy terms and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from ..autodiff import ops


def ppo_surrogate(log_prob_new: Tensor, log_prob_old: np.ndarray, advantage: np.ndarray, clip: float) -> Tensor:
    """``-mean(min(rho A, clip(rho, 1-eps, 1+eps) A))`` with ``rho = exp(new - old)``."""
    dt = log_prob_new.dtype
    ratio = ops.exp(ops.sub(log_prob_new, Tensor(log_prob_old, dtype=dt)))
    adv = Tensor(advantage, dtype=dt)
    unclipped = ops.mul(ratio, adv)
    clipped = ops.mul(ops.clip(ratio, 1.0 - clip, 1.0 + clip), adv)
    return ops.scale(ops.mean(ops.minimum(unclipped, clipped)), -1.0)


def ppo_surrogate_numpy(log_prob_new, log_prob_old, advantage, clip):
    """Per-sample reference evaluation of the clipped objective."""
    total = 0.0
    for lpn, lpo, a in zip(np.ravel(log_prob_new), np.ravel(log_prob_old), np.ravel(advantage)):
        rho = float(np.exp(lpn - lpo))
        total += min(rho * a, min(max(rho, 1 - clip), 1 + clip) * a)
    return -total / np.size(advantage)


def imitation_mse(mean_pre: Tensor, expert_action: np.ndarray, mask: np.ndarray) -> Tensor:
    """MSE between the squashed policy mean and the expert action over valid actuators."""
    dt = mean_pre.dtype
    return ops.mse(ops.sigmoid(mean_pre), Tensor(expert_action, dtype=dt), mask=mask)


def value_mse(value: Tensor, returns: np.ndarray) -> Tensor:
    return ops.mse(value, Tensor(returns, dtype=value.dtype))


@dataclass
class LossCoefficients:
    pg: float
    imitation: float
    value: float
    entropy: float

    @classmethod
    def from_config(cls, cfg) -> "LossCoefficients":
        return cls(cfg.pg_coef, cfg.imitation_coef, cfg.value_coef, cfg.entropy_coef)


def combined_loss(out, mb, coefs: LossCoefficients, clip: float):
    """Weighted loss and per-sample diagnostics for one minibatch.

    ``out`` is a :class:`PolicyOutput`; ``mb`` exposes ``actions``,
    ``log_probs``, ``advantages``, ``returns`` and ``expert_actions``.
    """
    dist = out.dist
    terms = {}
    loss = ops.scale(value_mse(out.value, mb.returns), coefs.value)
    terms["value"] = loss
    if coefs.pg:
        lp = dist.log_prob(mb.actions)
        pg = ops.scale(ppo_surrogate(lp, mb.log_probs, mb.advantages, clip), coefs.pg)
        loss = ops.add(loss, pg)
    if coefs.imitation:
        im = ops.scale(imitation_mse(dist.mean, mb.expert_actions, dist.mask), coefs.imitation)
        loss = ops.add(loss, im)
    if coefs.entropy:
        ent = ops.scale(ops.mean(dist.entropy()), -coefs.entropy)
        loss = ops.add(loss, ent)
    return loss
