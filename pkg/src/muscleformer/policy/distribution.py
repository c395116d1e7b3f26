"""Gaussian action distribution with task-conditioned noise scaling.

Actions are sampled in an unbounded pre-squash space and mapped to muscle
activations with a sigmoid. Log-probabilities are evaluated in pre-squash
space without a Jacobian correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from ..autodiff import ops

_HALF_LOG_2PI_E = 0.5 * math.log(2.0 * math.pi * math.e)


def noise_std(logits: Tensor, sigma_tilde: Tensor, mask: np.ndarray) -> Tensor:
    """Per-actuator std ``sigma_tilde * softmax(logits) * N_A``.

    ``logits`` (B, A) are the per-actuator noise scores ``x^T E``; padded
    actuator slots are excluded from the softmax and get std 1 so that they
    stay harmless in downstream log-density evaluations.
    """
    n_a = mask.sum(axis=-1, keepdims=True).astype(logits.dtype)
    w = ops.softmax(ops.masked_fill(logits, ~mask, -1e9), axis=-1)
    std = ops.mul(ops.mul(w, n_a), sigma_tilde)
    return ops.where(mask, std, np.ones_like(logits.data))


def noise_std_numpy(E: np.ndarray, x: np.ndarray, sigma_tilde: float) -> np.ndarray:
    """Reference form for one observation: ``E`` is (N_T, N_A), ``x`` is (N_T,)."""
    z = x @ E
    z = z - z.max()
    w = np.exp(z) / np.exp(z).sum()
    return sigma_tilde * w * E.shape[1]


def squash(u: np.ndarray) -> np.ndarray:
    return np.clip(ops._sigmoid(np.asarray(u, dtype=np.float64)), 0.0, 1.0)


def unsquash(a: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    a = np.clip(np.asarray(a, dtype=np.float64), eps, 1.0 - eps)
    return np.log(a) - np.log1p(-a)


@dataclass
class ActionDistribution:
    mean: Tensor          # pre-squash, (B, A)
    std: Tensor           # (B, A); 1 on padded slots
    mask: np.ndarray      # (B, A) bool

    @property
    def squashed_mean(self) -> np.ndarray:
        return squash(self.mean.data) * self.mask

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Pre-squash sample; padded slots are zero."""
        eps = rng.standard_normal(self.mean.shape)
        return (self.mean.data + self.std.data * eps) * self.mask

    def log_prob(self, u: np.ndarray) -> Tensor:
        lp = ops.gaussian_log_prob(Tensor(u, dtype=self.mean.dtype), self.mean, self.std)
        return ops.sum(ops.mul(lp, self.mask.astype(lp.dtype)), axis=-1)

    def entropy(self) -> Tensor:
        ent = ops.add(ops.log(self.std), _HALF_LOG_2PI_E)
        return ops.sum(ops.mul(ent, self.mask.astype(ent.dtype)), axis=-1)


def log_prob_numpy(mean: np.ndarray, std: np.ndarray, u: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = (u - mean) / std
    lp = -0.5 * z * z - np.log(std) - 0.5 * math.log(2.0 * math.pi)
    return (lp * mask).sum(axis=-1)
