"""On-policy rollout storage for a set of task groups."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..policy.tokens import TokenBatch, concat_batches
from .actor import TaskTokens


class GroupBuffer:
    """(T, n_envs, ...) arrays for the envs of one task."""

    def __init__(self, tokens: TaskTokens, steps: int, n_envs: int, window: int):
        self.tokens = tokens
        c, a = tokens.n_channels, tokens.n_actuators
        self.steps, self.n = steps, n_envs
        self.values = np.zeros((steps, n_envs, c, window), dtype=np.float32)
        self.actions = np.zeros((steps, n_envs, a))
        self.log_probs = np.zeros((steps, n_envs))
        self.value_preds = np.zeros((steps, n_envs))
        self.next_values = np.zeros((steps, n_envs))
        self.raw_rewards = np.zeros((steps, n_envs))
        self.rewards = np.zeros((steps, n_envs))
        self.dones = np.zeros((steps, n_envs), dtype=bool)
        self.terminated = np.zeros((steps, n_envs), dtype=bool)
        self.expert_actions = np.zeros((steps, n_envs, a))
        self.expert_acted = np.zeros((steps, n_envs), dtype=bool)
        self.advantages = np.zeros((steps, n_envs))
        self.returns = np.zeros((steps, n_envs))

    @property
    def size(self) -> int:
        return self.steps * self.n

    def flat(self, name: str) -> np.ndarray:
        x = getattr(self, name)
        return x.reshape((self.size,) + x.shape[2:])

    def token_batch(self, rows: np.ndarray) -> TokenBatch:
        tt = self.tokens
        k = len(rows)
        return TokenBatch(
            self.flat("values")[rows],
            np.broadcast_to(tt.sensor_ids, (k, tt.n_channels)).copy(),
            np.ones((k, tt.n_channels), dtype=bool),
            np.broadcast_to(tt.actuator_ids, (k, tt.n_actuators)).copy(),
            np.ones((k, tt.n_actuators), dtype=bool),
            np.full(k, tt.task_index, dtype=np.int64),
        )


@dataclass
class Minibatch:
    batch: TokenBatch
    group: np.ndarray           # group index per row
    actions: np.ndarray         # (B, A_max) pre-squash, zero padded
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    expert_actions: np.ndarray  # (B, A_max)


def _pad(x: np.ndarray, width: int) -> np.ndarray:
    if x.shape[1] == width:
        return x
    return np.pad(x, ((0, 0), (0, width - x.shape[1])))


class RolloutBuffer:
    """Shared buffer over all task groups of a collection phase."""

    def __init__(self, groups: list[GroupBuffer]):
        self.groups = groups

    def __len__(self) -> int:
        return sum(g.size for g in self.groups)

    def minibatches(self, batch_size: int, rng: np.random.Generator, standardize_advantage: bool = True):
        sizes = [g.size for g in self.groups]
        gid = np.concatenate([np.full(s, i) for i, s in enumerate(sizes)])
        row = np.concatenate([np.arange(s) for s in sizes])
        perm = rng.permutation(len(gid))
        for start in range(0, len(perm), batch_size):
            sel = perm[start : start + batch_size]
            yield self._assemble(gid[sel], row[sel], standardize_advantage)

    def _assemble(self, gids, rows, standardize_advantage) -> Minibatch:
        parts, order = [], []
        for g in np.unique(gids):
            pick = np.flatnonzero(gids == g)
            order.append(pick)
            parts.append((g, rows[pick]))
        batches = [self.groups[g].token_batch(r) for g, r in parts]
        batch = concat_batches(batches)
        a_max = batch.actuator_ids.shape[1]

        def cat(name, pad=False):
            xs = [self.groups[g].flat(name)[r] for g, r in parts]
            return np.concatenate([_pad(x, a_max) for x in xs] if pad else xs)

        adv = cat("advantages")
        if standardize_advantage and adv.size > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        group = np.concatenate([np.full(len(r), g) for g, r in parts])
        return Minibatch(batch, group, cat("actions", True), cat("log_probs"), adv, cat("returns"), cat("expert_actions", True))
