"""Per-signature observation standardization and per-task reward scaling."""

from __future__ import annotations

import numpy as np

from ..vocab import Signature, signature_key

STD_EPS = 1e-8
OBS_CLIP = 10.0


class RunningStandardizer:
    """Running mean/variance per signature key, shared across tasks.

    Statistics live in flat arrays; :meth:`indices` maps a task's channel
    signatures to slots. Batch updates use the pairwise (Chan et al.)
    combination, which equals a sample-by-sample Welford pass.
    """

    def __init__(self, enabled: bool = True, eps: float = STD_EPS, clip: float = OBS_CLIP):
        self.enabled = enabled
        self.eps = eps
        self.clip = clip
        self.frozen = False
        self._slot: dict[str, int] = {}
        self.count = np.zeros(0)
        self.mean = np.zeros(0)
        self.m2 = np.zeros(0)

    @property
    def keys(self) -> list[str]:
        return list(self._slot)

    def slot(self, key: str) -> int:
        idx = self._slot.get(key)
        if idx is None:
            idx = len(self._slot)
            self._slot[key] = idx
            self.count = np.append(self.count, 0.0)
            self.mean = np.append(self.mean, 0.0)
            self.m2 = np.append(self.m2, 0.0)
        return idx

    def indices(self, signatures, task: str | None = None) -> np.ndarray:
        """Slots for ``signatures``; a ``task`` prefix gives task-local statistics."""
        keys = [signature_key(s) for s in signatures]
        if task is not None:
            keys = [f"{task}:{k}" for k in keys]
        return np.array([self.slot(k) for k in keys], dtype=np.int64)

    def update(self, idx: np.ndarray, values: np.ndarray) -> None:
        """Fold a batch ``values`` (n, C) into the slots ``idx`` (C,)."""
        if self.frozen:
            return
        values = np.asarray(values, dtype=np.float64).reshape(-1, len(idx))
        n_b = values.shape[0]
        mean_b = values.mean(axis=0)
        m2_b = ((values - mean_b) ** 2).sum(axis=0)
        n_a, mean_a, m2_a = self.count[idx], self.mean[idx], self.m2[idx]
        n = n_a + n_b
        delta = mean_b - mean_a
        self.mean[idx] = mean_a + delta * n_b / n
        self.m2[idx] = m2_a + m2_b + delta ** 2 * n_a * n_b / n
        self.count[idx] = n

    def update_one(self, key: str, value: float) -> None:
        """Single-sample Welford update."""
        if self.frozen:
            return
        i = self.slot(key)
        self.count[i] += 1
        d = value - self.mean[i]
        self.mean[i] += d / self.count[i]
        self.m2[i] += d * (value - self.mean[i])

    def var(self, idx=None) -> np.ndarray:
        idx = slice(None) if idx is None else idx
        c = self.count[idx]
        return np.where(c > 0, self.m2[idx] / np.maximum(c, 1.0), 1.0)

    def standardize(self, idx: np.ndarray, values: np.ndarray) -> np.ndarray:
        """``(v - mean) / sqrt(var + eps)`` clipped to +-clip; channels on axis -2 or -1."""
        if not self.enabled:
            return np.asarray(values, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        mean, std = self.mean[idx], np.sqrt(self.var(idx) + self.eps)
        if values.ndim >= 2 and values.shape[-1] != len(idx):
            mean, std = mean[:, None], std[:, None]     # (C, W) windows
        return np.clip((values - mean) / std, -self.clip, self.clip)

    def standardize_key(self, key: str, value: float, training: bool = True) -> float:
        if training:
            self.update_one(key, value)
        i = self.slot(key)
        return float(self.standardize(np.array([i]), np.array([value]))[0])

    def state_dict(self) -> dict:
        return {
            "keys": self.keys,
            "count": self.count.copy(),
            "mean": self.mean.copy(),
            "m2": self.m2.copy(),
            "enabled": self.enabled,
            "eps": self.eps,
            "clip": self.clip,
        }

    @classmethod
    def from_state(cls, state: dict) -> "RunningStandardizer":
        s = cls(bool(state["enabled"]), float(state["eps"]), float(state["clip"]))
        for k in state["keys"]:
            s.slot(k)
        s.count = np.array(state["count"], dtype=np.float64)
        s.mean = np.array(state["mean"], dtype=np.float64)
        s.m2 = np.array(state["m2"], dtype=np.float64)
        return s


def standardize_observation(standardizer: RunningStandardizer, signature: Signature, value: float, training: bool) -> float:
    return standardizer.standardize_key(signature_key(signature), value, training)


class RunningMeanStd:
    """Mean/variance of a stream, initialised as in common vector-env wrappers."""

    def __init__(self, init_count: float = 1e-4):
        self.mean = 0.0
        self.var = 1.0
        self.count = init_count

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size == 0:
            return
        bm, bv, bn = x.mean(), x.var(), x.size
        delta = bm - self.mean
        tot = self.count + bn
        m2 = self.var * self.count + bv * bn + delta ** 2 * self.count * bn / tot
        self.mean = self.mean + delta * bn / tot
        self.var = m2 / tot
        self.count = tot


class ReturnNormalizer:
    """Scales rewards by the running std of the discounted return, per task.

    Only the standard deviation is used (no mean subtraction), so a
    constant-zero reward stays zero. ``per_task=False`` pools every task
    into one statistic; ``enabled=False`` passes rewards through.
    """

    def __init__(self, gamma: float = 0.99, enabled: bool = True, per_task: bool = True, eps: float = STD_EPS, clip: float = OBS_CLIP):
        self.gamma = gamma
        self.enabled = enabled
        self.per_task = per_task
        self.eps = eps
        self.clip = clip
        self.frozen = False
        self.stats: dict[str, RunningMeanStd] = {}
        self._returns: dict[tuple[str, int], np.ndarray] = {}

    def _stat(self, task: str) -> RunningMeanStd:
        key = task if self.per_task else "*"
        if key not in self.stats:
            self.stats[key] = RunningMeanStd()
        return self.stats[key]

    def __call__(self, task: str, reward: np.ndarray, done: np.ndarray, stream: int = 0) -> np.ndarray:
        """Normalize one step of rewards ``(n,)`` for the envs of ``task``."""
        reward = np.asarray(reward, dtype=np.float64)
        if not self.enabled:
            return reward.copy()
        key = (task, stream)
        ret = self._returns.get(key)
        if ret is None or ret.shape != reward.shape:
            ret = np.zeros_like(reward)
        ret = ret * self.gamma + reward
        stat = self._stat(task)
        if not self.frozen:
            stat.update(ret)
        self._returns[key] = np.where(done, 0.0, ret)
        return np.clip(reward / np.sqrt(stat.var + self.eps), -self.clip, self.clip)

    def std(self, task: str) -> float:
        return float(np.sqrt(self._stat(task).var + self.eps))

    def state_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "enabled": self.enabled,
            "per_task": self.per_task,
            "stats": {k: [v.mean, v.var, v.count] for k, v in self.stats.items()},
        }

    @classmethod
    def from_state(cls, state: dict) -> "ReturnNormalizer":
        r = cls(float(state["gamma"]), bool(state["enabled"]), bool(state["per_task"]))
        for k, (m, v, c) in state["stats"].items():
            s = RunningMeanStd()
            s.mean, s.var, s.count = float(m), float(v), float(c)
            r.stats[k] = s
        return r
