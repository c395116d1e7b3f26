"""Deterministic evaluation of policies and experts on seeded episodes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..policy.distribution import squash
from ..policy.tokens import HistoryWindow
from ..sim.tasks import TaskSpec, VecTask, episode_seed
from .actor import make_batch, task_tokens
from .normalize import RunningStandardizer

EVAL_SEED_OFFSET = 1_000_003


@dataclass
class EvalResult:
    task: str
    success: np.ndarray                # (episodes,) bool, success at the final step
    returns: np.ndarray
    activations: np.ndarray | None = None   # (steps, episodes, n_actuators) when recorded
    meta: dict = field(default_factory=dict)

    @property
    def solved_fraction(self) -> float:
        return float(self.success.mean())

    @property
    def stderr(self) -> float:
        p, n = self.solved_fraction, len(self.success)
        return float(np.sqrt(p * (1 - p) / max(n, 1)))

    @property
    def mean_return(self) -> float:
        return float(self.returns.mean())


def eval_seeds(seed: int, episodes: int) -> list[int]:
    return [episode_seed(EVAL_SEED_OFFSET + seed, i, 0) for i in range(episodes)]


def run_controller(task: TaskSpec, controller: Callable, episodes: int, seed: int, window: int = 5,
                   record: bool = False, transform: Callable | None = None) -> EvalResult:
    """Run ``controller(obs, raw_window) -> actions`` over seeded episodes in one vectorized env.

    ``transform`` post-processes actions before they reach the environment
    (used for subspace projection).
    """
    env = VecTask(task, episodes, seed)
    obs = env.reset(eval_seeds(seed, episodes))
    hist = HistoryWindow(episodes, env.obs_dim, window)
    hist.reset(slice(None), obs)
    acts = []
    info = {}
    for _ in range(task.max_steps):
        a = np.asarray(controller(obs, hist.data), dtype=np.float64)
        if transform is not None:
            a = transform(a)
        if record:
            acts.append(np.clip(a, 0.0, 1.0))
        obs, _, _, _, info = env.step(a)
        hist.push(obs)
    return EvalResult(task.name, info["episode_success"].astype(bool), info["episode_return"],
                      np.stack(acts) if record else None)


def policy_controller(policy, standardizer: RunningStandardizer, task: TaskSpec, disjoint: bool = False):
    tt = task_tokens(policy, standardizer, task, disjoint)
    dt = next(iter(policy.parameters().values())).dtype

    def act(obs, window):
        out = policy.act(make_batch(tt, standardizer, window, dt))
        return squash(out.dist.mean.data)[:, : tt.n_actuators]

    return act


def expert_controller(expert):
    return lambda obs, window: expert(obs, window)


def evaluate_policy(policy, standardizer, task: TaskSpec, episodes: int = 200, seed: int = 0, disjoint: bool = False,
                    window: int | None = None, record: bool = False, transform=None) -> EvalResult:
    """Mean-action rollouts with the standardizer frozen."""
    window = window or getattr(policy.spec, "window", 5)
    was = standardizer.frozen
    standardizer.frozen = True
    try:
        return run_controller(task, policy_controller(policy, standardizer, task, disjoint), episodes, seed,
                              window, record, transform)
    finally:
        standardizer.frozen = was


def evaluate_expert(expert, task: TaskSpec, episodes: int = 200, seed: int = 0, window: int = 5,
                    record: bool = False, transform=None) -> EvalResult:
    return run_controller(task, expert_controller(expert), episodes, seed, window, record, transform)


def percent_of_expert(student: EvalResult, expert: EvalResult) -> tuple[float, float]:
    """Student solved fraction as % of the expert's, with its standard error."""
    ref = expert.solved_fraction
    if ref <= 0:
        return float("nan"), float("nan")
    return 100.0 * student.solved_fraction / ref, 100.0 * student.stderr / ref
