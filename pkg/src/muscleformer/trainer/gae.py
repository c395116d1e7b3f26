"""Generalized advantage estimation."""

from __future__ import annotations

import numpy as np


def gae(rewards, values, next_values, dones, gamma=0.99, lam=0.95, terminated=None):
    """Advantages and returns for (T, ...) arrays.

    Args:
        rewards: reward after step t.
        values: V(s_t).
        next_values: V(s_{t+1}); for a truncated step this is the value of
            the terminal observation, for the last collected step the
            bootstrap value.
        dones: episode ended after step t (terminated or truncated); cuts
            the advantage recursion.
        terminated: true terminal states; no bootstrap from ``next_values``.
            Defaults to all False (every episode end is a time-limit
            truncation).

    Returns:
        ``(advantages, returns)`` with ``returns = advantages + values``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    next_values = np.asarray(next_values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    term = np.zeros_like(dones) if terminated is None else np.asarray(terminated, dtype=bool)
    adv = np.zeros_like(rewards)
    last = np.zeros(rewards.shape[1:])
    for t in range(rewards.shape[0] - 1, -1, -1):
        delta = rewards[t] + gamma * next_values[t] * (~term[t]) - values[t]
        last = delta + gamma * lam * (~dones[t]) * last
        adv[t] = last
    return adv, adv + values


def gae_bruteforce(rewards, values, next_values, dones, gamma=0.99, lam=0.95, terminated=None):
    """O(T^2) direct sum ``A_t = sum_k (gamma lam)^k delta_{t+k}`` within the episode."""
    rewards = np.asarray(rewards, dtype=np.float64)
    T = len(rewards)
    term = np.zeros(T, dtype=bool) if terminated is None else np.asarray(terminated, dtype=bool)
    delta = [rewards[t] + gamma * next_values[t] * (0.0 if term[t] else 1.0) - values[t] for t in range(T)]
    adv = np.zeros(T)
    for t in range(T):
        acc, w = 0.0, 1.0
        for k in range(t, T):
            acc += w * delta[k]
            if dones[k]:
                break
            w *= gamma * lam
        adv[t] = acc
    return adv, adv + np.asarray(values, dtype=np.float64)


def standardize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size < 2:
        return adv - adv.mean()
    return (adv - adv.mean()) / (adv.std() + eps)
