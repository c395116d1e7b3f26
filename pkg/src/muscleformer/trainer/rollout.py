"""Parallel multi-task experience collection."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..policy.distribution import squash, unsquash
from ..policy.tokens import HistoryWindow, concat_batches
from ..sim.tasks import VecTask
from .actor import TaskTokens, make_batch
from .buffer import GroupBuffer, RolloutBuffer
from .gae import gae
from .normalize import ReturnNormalizer, RunningStandardizer

log = logging.getLogger(__name__)


class TaskGroup:
    """The vectorized envs of one task plus their raw observation history."""

    def __init__(self, tokens: TaskTokens, n_envs: int, seed: int, window: int):
        self.tokens = tokens
        self.task = tokens.task
        self.env = VecTask(self.task, n_envs, seed)
        self.history = HistoryWindow(n_envs, tokens.n_channels, window)
        self.obs = self.env.reset()
        self.history.reset(slice(None), self.obs)

    @property
    def n(self) -> int:
        return self.env.n


@dataclass
class EpisodeStats:
    successes: dict = field(default_factory=dict)
    returns: dict = field(default_factory=dict)

    def add(self, task: str, success: np.ndarray, ret: np.ndarray) -> None:
        self.successes.setdefault(task, []).extend(success.tolist())
        self.returns.setdefault(task, []).extend(ret.tolist())


class Collector:
    """Steps every task group against one policy snapshot.

    ``act_with_expert`` selects who drives the environment (BC) while
    ``label`` stores expert actions for every visited state (BC, OBC,
    OBC-PPO). Standardizer updates happen in group order after each step,
    so the statistics do not depend on the worker count.
    """

    def __init__(self, policy, tokens: list[TaskTokens], env_counts: dict, seed: int, window: int,
                 standardizer: RunningStandardizer, reward_norm: ReturnNormalizer, experts=None,
                 workers: int = 1, gamma: float = 0.99, lam: float = 0.95):
        self.policy = policy
        self.standardizer = standardizer
        self.reward_norm = reward_norm
        self.experts = experts
        self.gamma, self.lam = gamma, lam
        self.window = window
        self.groups = [
            TaskGroup(tt, env_counts[tt.task.name], seed * 1000 + i, window) for i, tt in enumerate(tokens)
        ]
        self.rng = np.random.default_rng([seed, 7])
        self.workers = max(1, int(workers))
        self._dt = None
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        for g in self.groups:
            self.standardizer.update(g.tokens.std_idx, g.obs)

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()

    def _map(self, fn, items):
        if self._pool is None:
            return [fn(x) for x in items]
        return list(self._pool.map(fn, items))

    @property
    def num_envs(self) -> int:
        return sum(g.n for g in self.groups)

    def _dtype(self):
        if self._dt is None:
            self._dt = next(iter(self.policy.parameters().values())).dtype
        return self._dt

    def _forward(self, windows: list[np.ndarray], groups: list[TaskGroup]):
        dt = self._dtype()
        batch = concat_batches([make_batch(g.tokens, self.standardizer, w, dt) for g, w in zip(groups, windows)])
        return batch, self.policy.act(batch)

    def collect(self, steps: int, act_with_expert: bool = False, label: bool = False, stochastic: bool = True):
        bufs = [GroupBuffer(g.tokens, steps, g.n, self.window) for g in self.groups]
        stats = EpisodeStats()
        offsets = np.cumsum([0] + [g.n for g in self.groups])
        for t in range(steps):
            batch, out = self._forward([g.history.data for g in self.groups], self.groups)
            mean = out.dist.mean.data.astype(np.float64)
            std = out.dist.std.data.astype(np.float64)
            value = out.value.data.astype(np.float64)
            eps = self.rng.standard_normal(mean.shape)
            u_all = mean + std * eps if stochastic else mean
            jobs = []
            for gi, g in enumerate(self.groups):
                lo, hi = offsets[gi], offsets[gi + 1]
                a = g.tokens.n_actuators
                u = u_all[lo:hi, :a]
                expert_a = self.experts[g.task.name](g.obs, g.history.data) if (label or act_with_expert) else None
                if act_with_expert:
                    action = expert_a
                    u = unsquash(expert_a)
                else:
                    action = squash(u)
                z = (u - mean[lo:hi, :a]) / std[lo:hi, :a]
                lp = (-0.5 * z * z - np.log(std[lo:hi, :a]) - 0.5 * np.log(2 * np.pi)).sum(axis=1)
                b = bufs[gi]
                b.values[t] = batch.values[lo:hi, : g.tokens.n_channels]
                b.actions[t] = u
                b.log_probs[t] = lp
                b.value_preds[t] = value[lo:hi]
                b.expert_acted[t] = act_with_expert
                if expert_a is not None:
                    b.expert_actions[t] = expert_a
                jobs.append((g, action))
            results = self._map(lambda ga: ga[0].env.step(ga[1]), jobs)
            finals = []
            for gi, (g, (obs, rew, term, trunc, info)) in enumerate(zip(self.groups, results)):
                b = bufs[gi]
                done = term | trunc
                b.raw_rewards[t] = rew
                b.rewards[t] = self.reward_norm(g.task.name, rew, done)
                b.dones[t] = done
                b.terminated[t] = term
                if trunc.any():
                    fin = g.history.data.copy()
                    fin[..., :-1] = fin[..., 1:]
                    fin[..., -1] = info["final_obs"]
                    finals.append((gi, np.flatnonzero(trunc), fin))
                    stats.add(g.task.name, info["episode_success"][trunc], info["episode_return"][trunc])
                self.standardizer.update(g.tokens.std_idx, obs)
                g.history.push(obs)
                if done.any():
                    g.history.reset(np.flatnonzero(done), obs[done])
                g.obs = obs
            final_values = self._final_values(finals)
            for gi, idx, v in final_values:
                bufs[gi].next_values[t, idx] = v
            if t > 0:
                self._fill_next(bufs, t - 1)
        _, out = self._forward([g.history.data for g in self.groups], self.groups)
        boot = out.value.data.astype(np.float64)
        self._fill_next(bufs, steps - 1, boot)
        for b in bufs:
            b.advantages, b.returns = gae(b.rewards, b.value_preds, b.next_values, b.dones, self.gamma, self.lam, b.terminated)
        return RolloutBuffer(bufs), stats

    def _fill_next(self, bufs, t, boot=None):
        """Set V(s_{t+1}) for the non-terminal envs of step ``t``."""
        for gi, b in enumerate(bufs):
            nxt = boot[self._offset(gi) : self._offset(gi + 1)] if boot is not None else b.value_preds[t + 1]
            keep = ~b.dones[t]
            b.next_values[t, keep] = nxt[keep]

    def _offset(self, gi: int) -> int:
        return sum(g.n for g in self.groups[:gi])

    def _final_values(self, finals):
        if not finals:
            return []
        groups = [self.groups[gi] for gi, _, _ in finals]
        windows = [fin[idx] for (_, idx, fin) in finals]
        dt = self._dtype()
        batch = concat_batches([make_batch(g.tokens, self.standardizer, w, dt) for g, w in zip(groups, windows)])
        v = self.policy.act(batch).value.data.astype(np.float64)
        out, o = [], 0
        for gi, idx, _ in finals:
            out.append((gi, idx, v[o : o + len(idx)]))
            o += len(idx)
        return out
