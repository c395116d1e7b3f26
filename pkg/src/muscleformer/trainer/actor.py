"""Glue between raw environment windows and a policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..policy.distribution import squash
from ..policy.tokens import TokenBatch
from ..sim.tasks import CATALOG, TaskSpec, actuator_signatures, observation_signatures
from ..vocab import disjoint_signature
from .normalize import RunningStandardizer


def task_index(task: TaskSpec) -> int:
    """Stable index of a task in the catalog (the MLP's task-embedding row)."""
    return [t.name for t in CATALOG].index(task.name)


@dataclass
class TaskTokens:
    """Signature ids and standardizer slots of one task's channels."""

    task: TaskSpec
    task_index: int
    sensor_ids: np.ndarray
    actuator_ids: np.ndarray
    std_idx: np.ndarray

    @property
    def n_channels(self) -> int:
        return len(self.sensor_ids)

    @property
    def n_actuators(self) -> int:
        return len(self.actuator_ids)


def task_tokens(policy, standardizer: RunningStandardizer, task: TaskSpec, disjoint: bool = False) -> TaskTokens:
    sensors = observation_signatures(task)
    acts = actuator_signatures(task)
    if disjoint:
        sensors = [disjoint_signature(s, task.name) for s in sensors]
        acts = [disjoint_signature(s, task.name) for s in acts]
    reg = getattr(policy, "register_signature", None)
    sid = np.array([reg(s) if reg else 0 for s in sensors], dtype=np.int64)
    aid = np.array([reg(s) if reg else 0 for s in acts], dtype=np.int64)
    return TaskTokens(task, task_index(task), sid, aid, standardizer.indices(sensors))


def make_batch(tt: TaskTokens, standardizer: RunningStandardizer, raw_window: np.ndarray, dtype=np.float32) -> TokenBatch:
    values = standardizer.standardize(tt.std_idx, raw_window).astype(dtype)
    n = values.shape[0]
    return TokenBatch(
        values,
        np.broadcast_to(tt.sensor_ids, (n, tt.n_channels)).copy(),
        np.ones((n, tt.n_channels), dtype=bool),
        np.broadcast_to(tt.actuator_ids, (n, tt.n_actuators)).copy(),
        np.ones((n, tt.n_actuators), dtype=bool),
        np.full(n, tt.task_index, dtype=np.int64),
    )


class PolicyActor:
    """Deterministic (mean) actions of a policy with frozen standardizer."""

    def __init__(self, policy, standardizer: RunningStandardizer, tasks, disjoint: bool = False):
        self.policy = policy
        self.standardizer = standardizer
        self.tokens = [task_tokens(policy, standardizer, t, disjoint) for t in tasks]

    def batch(self, i: int, raw_window: np.ndarray) -> TokenBatch:
        dt = next(iter(self.policy.parameters().values())).dtype
        return make_batch(self.tokens[i], self.standardizer, raw_window, dt)

    def mean_action(self, i: int, raw_window: np.ndarray) -> np.ndarray:
        out = self.policy.act(self.batch(i, raw_window))
        return squash(out.dist.mean.data)[:, : self.tokens[i].n_actuators]
