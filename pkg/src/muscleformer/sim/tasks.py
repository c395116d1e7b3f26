"""The four-task desk suite and its vectorized environments.

Every task exposes a fixed, named list of scalar observation channels
(muscle length, velocity, force, activation; joint position and velocity;
task-specific target, error and object channels) and accepts muscle
activations in [0, 1].
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import yaml

from ..vocab import Signature
from .embodiment import Embodiment, mini_arm, mini_elbow

EMBODIMENTS: dict[str, Callable[[], Embodiment]] = {"MiniElbow": mini_elbow, "MiniArm": mini_arm}
MUSCLE_MODALITIES = ("length", "velocity", "force", "activation")


@dataclass(frozen=True)
class TaskSpec:
    """Static description of one task.

    ``threshold`` is a joint-angle error (rad) for pose tasks, a tip
    distance (m) for reach tasks, and the half-width of the goal box (m)
    for relocation. ``ranges`` holds the reset randomization.
    """

    name: str
    embodiment: str
    objective: str                    # pose | reach | relocate
    threshold: float
    max_steps: int
    reward_weights: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)

    def build_embodiment(self) -> Embodiment:
        return EMBODIMENTS[self.embodiment]()

    @property
    def action_dim(self) -> int:
        return self.build_embodiment().n_muscles


_ARM_INIT = {"init_q": [[-0.2, 1.0], [0.6, 2.0]]}

CATALOG: tuple[TaskSpec, ...] = (
    TaskSpec(
        "ElbowPose", "MiniElbow", "pose", threshold=0.175, max_steps=100,
        reward_weights={"pose": 1.0, "solved": 1.0, "action_reg": 1.0},
        ranges={"target_q": [[0.2, 2.2]], "init_q": [[0.1, 2.3]]},
    ),
    TaskSpec(
        "ReachNear", "MiniArm", "reach", threshold=0.04, max_steps=100,
        reward_weights={"reach": 5.0, "solved": 1.0, "action_reg": 1.0},
        ranges={"target_radius": [0.2, 0.4], "target_angle": [-0.2, 1.4], **_ARM_INIT},
    ),
    TaskSpec(
        "ReachFar", "MiniArm", "reach", threshold=0.04, max_steps=100,
        reward_weights={"reach": 5.0, "solved": 1.0, "action_reg": 1.0},
        ranges={"target_radius": [0.45, 0.57], "target_angle": [-0.2, 1.4], **_ARM_INIT},
    ),
    TaskSpec(
        "RelocateLite", "MiniArm", "relocate", threshold=0.05, max_steps=150,
        reward_weights={"solved": 20.0, "pos_dist": 10.0, "palm_dist": 1.0, "action_reg": 0.1},
        ranges={
            "object_radius": [0.25, 0.45], "object_angle": [-0.3, 0.4],
            "goal_radius": [0.3, 0.5], "goal_angle": [0.8, 1.4],
            "object_mass": [0.05, 0.2], "grasp_radius": 0.04, "grasp_speed": 0.3,
            **_ARM_INIT,
        },
    ),
)


def task_catalog() -> list[TaskSpec]:
    return list(CATALOG)


def task_names() -> list[str]:
    return [t.name for t in CATALOG]


class UnknownTaskError(KeyError):
    def __str__(self) -> str:
        return f"unknown task {self.args[0]!r}; catalog: {', '.join(task_names())}"


def get_task(name: str) -> TaskSpec:
    for t in CATALOG:
        if t.name == name:
            return t
    raise UnknownTaskError(name)


def catalog_text() -> str:
    """YAML description of every task, its embodiment and randomization."""
    out = []
    for t in CATALOG:
        body = t.build_embodiment()
        entry = asdict(t)
        entry["action_dim"] = body.n_muscles
        entry["observation_channels"] = [list(s.words) for s in observation_signatures(t)]
        entry["embodiment_detail"] = {
            "dt": body.dt,
            "frame_skip": body.frame_skip,
            "links": list(body.links),
            "joints": [asdict(j) for j in body.joints],
            "muscles": [
                {**{k: v for k, v in asdict(m).items() if k != "words"}, "moment_arms": list(m.moment_arms), "v_max": m.v_max}
                for m in body.muscles
            ],
        }
        out.append(entry)
    return yaml.safe_dump({"tasks": out}, sort_keys=False)


# -- observation channels ------------------------------------------------

def observation_signatures(task: TaskSpec) -> list[Signature]:
    body = task.build_embodiment()
    sigs = []
    for m in body.muscles:
        for mod in MUSCLE_MODALITIES:
            sigs.append(Signature((*m.anatomy, "muscle", mod)))
    for j in body.joints:
        sigs.append(Signature((j.name, "joint", "position")))
        sigs.append(Signature((j.name, "joint", "velocity")))
    if task.objective == "pose":
        for j in body.joints:
            sigs.append(Signature((j.name, "joint", "target")))
            sigs.append(Signature((j.name, "joint", "error")))
    else:
        for ax in "xy":
            sigs.append(Signature(("tip", "position", ax)))
        if task.objective == "reach":
            for ax in "xy":
                sigs.append(Signature(("target", "position", ax)))
            for ax in "xy":
                sigs.append(Signature(("tip", "target", "error", ax)))
        else:
            for ax in "xy":
                sigs.append(Signature(("object", "position", ax)))
            for ax in "xy":
                sigs.append(Signature(("goal", "position", ax)))
            for ax in "xy":
                sigs.append(Signature(("object", "goal", "error", ax)))
            for ax in "xy":
                sigs.append(Signature(("tip", "object", "error", ax)))
            sigs.append(Signature(("object", "contact")))
    return sigs


def actuator_signatures(task: TaskSpec) -> list[Signature]:
    body = task.build_embodiment()
    return [Signature((*m.anatomy, "muscle"), kind="actuator") for m in body.muscles]


class ChannelLayout:
    """Column offsets of the named channel groups inside an observation."""

    def __init__(self, task: TaskSpec):
        body = task.build_embodiment()
        m, j = body.n_muscles, body.n_joints
        self.muscle = slice(0, 4 * m)
        o = 4 * m
        self.q = np.arange(o, o + 2 * j, 2)
        self.qd = self.q + 1
        o += 2 * j
        self.n_muscles, self.n_joints = m, j
        self.objective = task.objective
        if task.objective == "pose":
            self.target_q = np.arange(o, o + 2 * j, 2)
            self.error_q = self.target_q + 1
            o += 2 * j
        else:
            self.tip = slice(o, o + 2)
            o += 2
            if task.objective == "reach":
                self.target = slice(o, o + 2)
                self.error = slice(o + 2, o + 4)
                o += 4
            else:
                self.object = slice(o, o + 2)
                self.goal = slice(o + 2, o + 4)
                self.object_goal = slice(o + 4, o + 6)
                self.tip_object = slice(o + 6, o + 8)
                self.contact = o + 8
                o += 9
        self.size = o

    def activation(self, obs: np.ndarray) -> np.ndarray:
        return obs[..., self.muscle][..., 3::4]


def _episode_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF))


def episode_seed(base_seed: int, env_index: int, episode: int) -> int:
    """Deterministic per-episode seed derived from the run seed."""
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, int(env_index), int(episode)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _ik(body: Embodiment, point: np.ndarray):
    """Elbow-flexed inverse kinematics of the two-link arm (None if unreachable)."""
    l1, l2 = body.links
    r2 = float(point @ point)
    c = (r2 - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    if abs(c) > 1:
        return None
    q2 = np.arccos(c)
    q1 = np.arctan2(point[1], point[0]) - np.arctan2(l2 * np.sin(q2), l1 + l2 * np.cos(q2))
    return np.array([q1, q2])


def _reachable(body: Embodiment, point: np.ndarray, margin: float = 0.05) -> bool:
    q = _ik(body, point)
    return q is not None and bool(np.all(q >= body.lower + margin) and np.all(q <= body.upper - margin))


def _polar_sample(rng, radius, angle, body: Embodiment, tries: int = 100) -> np.ndarray:
    for _ in range(tries):
        r = rng.uniform(*radius)
        a = rng.uniform(*angle)
        p = np.array([r * np.cos(a), r * np.sin(a)])
        if _reachable(body, p):
            return p
    raise RuntimeError(f"could not sample a reachable point in radius {radius}, angle {angle}")


class VecTask:
    """``n_envs`` copies of one task advanced in lock-step.

    Episodes truncate at ``max_steps``; finished envs are reset
    automatically and their terminal observation is returned in
    ``info["final_obs"]``.
    """

    def __init__(self, task: TaskSpec, n_envs: int = 1, seed: int = 0):
        self.task = task
        self.body = task.build_embodiment()
        self.n = n_envs
        self.seed = seed
        self.layout = ChannelLayout(task)
        self.signatures = observation_signatures(task)
        self.actuators = actuator_signatures(task)
        nj, nm = self.body.n_joints, self.body.n_muscles
        self.q = np.zeros((n_envs, nj))
        self.qd = np.zeros((n_envs, nj))
        self.act = np.zeros((n_envs, nm))
        self.force = np.zeros((n_envs, nm))
        self.t = np.zeros(n_envs, dtype=np.int64)
        self.episodes = np.zeros(n_envs, dtype=np.int64)
        self.target = np.zeros((n_envs, nj if task.objective == "pose" else 2))
        self.obj = np.zeros((n_envs, 2))
        self.goal = np.zeros((n_envs, 2))
        self.mass = np.zeros(n_envs)
        self.attached = np.zeros(n_envs, dtype=bool)
        self.placed = np.zeros(n_envs, dtype=bool)
        self.ep_return = np.zeros(n_envs)

    @property
    def obs_dim(self) -> int:
        return self.layout.size

    @property
    def action_dim(self) -> int:
        return self.body.n_muscles

    # -- reset ------------------------------------------------------------
    def reset_env(self, i: int, seed: int) -> None:
        rng = _episode_rng(seed)
        rg = self.task.ranges
        body = self.body
        lo, hi = np.array(rg["init_q"]).T
        self.q[i] = rng.uniform(lo, hi)
        self.qd[i] = 0.0
        self.act[i] = 0.0
        self.t[i] = 0
        self.ep_return[i] = 0.0
        obj = self.task.objective
        if obj == "pose":
            lo, hi = np.array(rg["target_q"]).T
            self.target[i] = rng.uniform(lo, hi)
        elif obj == "reach":
            self.target[i] = _polar_sample(rng, rg["target_radius"], rg["target_angle"], body)
        else:
            self.obj[i] = _polar_sample(rng, rg["object_radius"], rg["object_angle"], body)
            self.goal[i] = _polar_sample(rng, rg["goal_radius"], rg["goal_angle"], body)
            self.mass[i] = rng.uniform(*rg["object_mass"])
            self.attached[i] = False
            self.placed[i] = False
        self.force[i] = body.forces(self.act[i], self.q[i], self.qd[i])

    def reset(self, seeds=None) -> np.ndarray:
        """Reset every env; ``seeds`` defaults to the derived per-episode seeds."""
        for i in range(self.n):
            s = episode_seed(self.seed, i, self.episodes[i]) if seeds is None else seeds[i]
            self.reset_env(i, s)
        return self.observe()

    # -- observation -------------------------------------------------------
    def tip(self) -> np.ndarray:
        return self.body.tip(self.q)

    def observe(self) -> np.ndarray:
        body = self.body
        cols = []
        length = body.muscle_lengths(self.q)
        vel = body.muscle_velocities(self.qd)
        muscle = np.stack([length, vel, self.force, self.act], axis=-1).reshape(self.n, -1)
        cols.append(muscle)
        cols.append(np.stack([self.q, self.qd], axis=-1).reshape(self.n, -1))
        obj = self.task.objective
        if obj == "pose":
            cols.append(np.stack([self.target, self.target - self.q], axis=-1).reshape(self.n, -1))
        else:
            tip = self.tip()
            cols.append(tip)
            if obj == "reach":
                cols += [self.target, self.target - tip]
            else:
                cols += [self.obj, self.goal, self.goal - self.obj, self.obj - tip, self.attached[:, None].astype(float)]
        return np.concatenate(cols, axis=1)

    # -- success / reward ----------------------------------------------------
    def success(self) -> np.ndarray:
        obj = self.task.objective
        if obj == "pose":
            return np.all(np.abs(self.target - self.q) < self.task.threshold, axis=1)
        if obj == "reach":
            return np.linalg.norm(self.target - self.tip(), axis=1) < self.task.threshold
        return np.all(np.abs(self.obj - self.goal) < self.task.threshold, axis=1)

    def reward(self, action: np.ndarray, success: np.ndarray) -> np.ndarray:
        w = self.task.reward_weights
        reg = (action ** 2).mean(axis=1)
        obj = self.task.objective
        if obj == "pose":
            task_term = -w["pose"] * np.linalg.norm(self.target - self.q, axis=1)
        elif obj == "reach":
            task_term = -w["reach"] * np.linalg.norm(self.target - self.tip(), axis=1)
        else:
            pos = np.linalg.norm(self.obj - self.goal, axis=1)
            palm = np.where(self.attached | self.placed, 0.0, np.linalg.norm(self.obj - self.tip(), axis=1))
            task_term = -w["pos_dist"] * pos - w["palm_dist"] * palm
        return task_term + w["solved"] * success - w["action_reg"] * reg

    # -- dynamics ------------------------------------------------------------
    def _relocate_contacts(self) -> None:
        rg = self.task.ranges
        tip = self.tip()
        tip_speed = np.linalg.norm(np.einsum("nij,nj->ni", self.body.jacobian(self.q), self.qd), axis=1)
        near = np.linalg.norm(self.obj - tip, axis=1) < rg["grasp_radius"]
        grab = ~self.attached & ~self.placed & near & (tip_speed < rg["grasp_speed"])
        self.attached |= grab
        self.obj = np.where(self.attached[:, None], tip, self.obj)
        in_box = np.all(np.abs(self.obj - self.goal) < self.task.threshold, axis=1)
        drop = self.attached & in_box
        self.placed |= drop
        self.attached &= ~drop

    def physics(self, action: np.ndarray) -> None:
        body = self.body
        extra = None
        for _ in range(body.frame_skip):
            if self.task.objective == "relocate":
                extra = self.mass[:, None] * body.joint_to_tip_distance_sq(self.q) * self.attached[:, None]
            self.act, self.q, self.qd, self.force = body.substep(self.act, action, self.q, self.qd, extra)
            if self.task.objective == "relocate":
                self._relocate_contacts()

    def step(self, action: np.ndarray):
        """Returns ``(obs, reward, terminated, truncated, info)``."""
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.n, self.action_dim):
            raise ValueError(f"{self.task.name}: action shape {action.shape} != {(self.n, self.action_dim)}")
        clipped = np.any((action < 0) | (action > 1) | ~np.isfinite(action), axis=1)
        action = np.clip(np.nan_to_num(action, nan=0.0), 0.0, 1.0)
        self.physics(action)
        self.t += 1
        success = self.success()
        reward = self.reward(action, success)
        self.ep_return += reward
        terminated = np.zeros(self.n, dtype=bool)
        truncated = self.t >= self.task.max_steps
        obs = self.observe()
        info = {"success": success, "clipped": clipped}
        if truncated.any():
            info["final_obs"] = obs.copy()
            info["episode_success"] = success.copy()
            info["episode_return"] = self.ep_return.copy()
            for i in np.flatnonzero(truncated):
                self.episodes[i] += 1
                self.reset_env(i, episode_seed(self.seed, i, self.episodes[i]))
            obs = self.observe()
        return obs, reward, terminated, truncated, info

    def kinetic_energy(self) -> np.ndarray:
        return 0.5 * (self.body.inertia * self.qd ** 2).sum(axis=1)


def make_env(name: str, n_envs: int = 1, seed: int = 0) -> VecTask:
    return VecTask(get_task(name), n_envs, seed)


def run_episode(task: TaskSpec, seed: int, policy: Callable[[np.ndarray], np.ndarray], record: bool = False):
    """Roll one episode with ``policy(obs(1, C)) -> action(1, A)``.

    Returns ``(success_at_end, return, rows)``; rows are filled when
    ``record`` is set.
    """
    env = VecTask(task, 1, 0)
    env.reset_env(0, seed)
    obs = env.observe()
    rows = []
    total = 0.0
    for step in range(task.max_steps):
        action = np.clip(np.asarray(policy(obs), dtype=np.float64).reshape(1, -1), 0.0, 1.0)
        prev = obs
        env.physics(action)
        env.t += 1
        success = env.success()
        reward = env.reward(action, success)
        total += float(reward[0])
        obs = env.observe()
        if record:
            rows.append((step, prev[0], action[0], float(reward[0]), bool(success[0])))
    return bool(success[0]), total, rows


def write_trajectory_csv(path, task: TaskSpec, rows) -> None:
    header = ["step"] + ["+".join(s.words) for s in observation_signatures(task)]
    header += [f"action:{'+'.join(s.words)}" for s in actuator_signatures(task)] + ["reward", "success"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for step, obs, act, rew, succ in rows:
            w.writerow([step, *(f"{x:.9g}" for x in obs), *(f"{x:.9g}" for x in act), f"{rew:.9g}", int(succ)])
