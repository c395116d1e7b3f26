"""Teacher policies: analytic muscle controllers and checkpoint-backed experts.

Analytic experts read only the latest raw observation. A desired joint
torque is computed by PD control (for reach targets the tip error is
first mapped to joint space through a damped pseudo-inverse of the arm
Jacobian) and routed to the muscles whose moment arm points the right way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim.tasks import ChannelLayout, TaskSpec, get_task

CO_CONTRACTION = 0.02


@dataclass
class Gains:
    kp: float
    kd: float
    damping_ls: float = 0.05       # Jacobian pseudo-inverse damping
    grasp_kd: float = 0.0          # extra joint damping close to the object


DEFAULT_GAINS = {
    "ElbowPose": Gains(kp=8.0, kd=0.6),
    "ReachNear": Gains(kp=12.0, kd=0.9),
    "ReachFar": Gains(kp=12.0, kd=0.9),
    "RelocateLite": Gains(kp=12.0, kd=0.9, grasp_kd=1.0),
}


def muscle_allocation(torque: np.ndarray, moment_arms: np.ndarray, f_max: np.ndarray, floor: float = CO_CONTRACTION):
    """Route joint torques (n, J) to muscle excitations (n, M).

    For each joint the demand is split over the muscles whose moment arm
    has the demand's sign, scaled so that equal excitation of that group
    would produce the demand. A co-contraction floor is added to every muscle.
    """
    strength = np.abs(moment_arms) * f_max[:, None]                       # (M, J)
    pos = moment_arms > 0
    cap_pos = (strength * pos).sum(axis=0)
    cap_neg = (strength * ~pos * (moment_arms < 0)).sum(axis=0)
    t_pos = np.maximum(torque, 0.0) / cap_pos                             # (n, J)
    t_neg = np.maximum(-torque, 0.0) / cap_neg
    u = t_pos @ (moment_arms > 0).T.astype(float) + t_neg @ (moment_arms < 0).T.astype(float)
    return np.clip(np.clip(u, 0.0, 1.0) + floor, 0.0, 1.0)


class Expert:
    mode = "analytic"
    deterministic = True

    def __init__(self, task: TaskSpec, noise_std: float = 0.0, seed: int = 0):
        self.task = task
        self.noise_std = noise_std
        self._rng = np.random.default_rng(seed)

    def __call__(self, obs: np.ndarray, window: np.ndarray | None = None) -> np.ndarray:
        a = self.act(np.atleast_2d(obs), window)
        if self.noise_std > 0:
            a = np.clip(a + self.noise_std * self._rng.standard_normal(a.shape), 0.0, 1.0)
        return a

    def act(self, obs: np.ndarray, window: np.ndarray | None) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        return f"{self.mode}:{type(self).__name__}"


class PDMuscleExpert(Expert):
    """Joint-space PD for pose tasks, Jacobian-mapped PD for reach tasks."""

    def __init__(self, task: TaskSpec, gains: Gains | None = None, **kw):
        super().__init__(task, **kw)
        self.body = task.build_embodiment()
        self.layout = ChannelLayout(task)
        self.gains = gains or DEFAULT_GAINS[task.name]
        self.r = self.body.moment_arms
        self.f_max = self.body.f_max

    def joint_error(self, obs: np.ndarray, target_point: np.ndarray | None = None) -> np.ndarray:
        lay = self.layout
        if lay.objective == "pose":
            return obs[:, lay.error_q]
        err = obs[:, lay.error] if target_point is None else target_point - obs[:, lay.tip]
        jac = self.body.jacobian(obs[:, lay.q])                             # (n, 2, J)
        lam = self.gains.damping_ls ** 2
        jjt = jac @ np.swapaxes(jac, 1, 2) + lam * np.eye(2)
        return np.einsum("nji,nj->ni", jac, np.linalg.solve(jjt, err[..., None])[..., 0])

    def torque(self, obs, err, kd_extra=0.0) -> np.ndarray:
        qd = obs[:, self.layout.qd]
        kd = self.gains.kd + np.asarray(kd_extra)
        if np.ndim(kd):
            kd = kd[:, None]
        return self.gains.kp * err - kd * qd

    def act(self, obs, window=None):
        return muscle_allocation(self.torque(obs, self.joint_error(obs)), self.r, self.f_max)


APPROACH, GRASP, CARRY, RELEASE = 0, 1, 2, 3
PHASE_NAMES = ("approach", "grasp", "carry", "release")


class WaypointExpert(PDMuscleExpert):
    """Phase machine for the relocation task, inferred from the observation.

    approach: drive the tip to the object; grasp: same target with extra
    damping so the tip slows below the grasp speed; carry: drive to the
    goal; release: object placed, hold the co-contraction floor.
    """

    grasp_zone = 0.08

    def phase(self, obs: np.ndarray) -> np.ndarray:
        lay = self.layout
        contact = obs[:, lay.contact] > 0.5
        in_box = np.all(np.abs(obs[:, lay.object_goal]) < self.task.threshold, axis=1)
        near = np.linalg.norm(obs[:, lay.tip_object], axis=1) < self.grasp_zone
        ph = np.where(near, GRASP, APPROACH)
        ph = np.where(contact, CARRY, ph)
        return np.where(~contact & in_box, RELEASE, ph)

    def act(self, obs, window=None):
        lay = self.layout
        ph = self.phase(obs)
        target = np.where((ph == CARRY)[:, None], obs[:, lay.goal], obs[:, lay.object])
        err = self.joint_error(obs, target)
        tau = self.torque(obs, err, np.where(ph == GRASP, self.gains.grasp_kd, 0.0))
        u = muscle_allocation(tau, self.r, self.f_max)
        return np.where((ph == RELEASE)[:, None], CO_CONTRACTION, u)


class CheckpointExpert(Expert):
    """Deterministic (mean-action) policy loaded from a checkpoint."""

    mode = "checkpoint"

    def __init__(self, task: TaskSpec, checkpoint, path: str | None = None, **kw):
        super().__init__(task, **kw)
        from .trainer.actor import PolicyActor

        if task.name not in checkpoint.metadata.get("tasks", [task.name]):
            raise ValueError(
                f"checkpoint trained on {checkpoint.metadata.get('tasks')} cannot act as expert for {task.name}"
            )
        self.actor = PolicyActor(checkpoint.policy, checkpoint.standardizer, [task])
        self.path = path

    def act(self, obs, window=None):
        if window is None:
            raise ValueError("checkpoint experts need the observation history window")
        return self.actor.mean_action(0, window)

    def describe(self) -> str:
        return f"checkpoint:{self.path}"


def analytic_expert(task: TaskSpec | str, noise_std: float = 0.0, seed: int = 0) -> Expert:
    task = get_task(task) if isinstance(task, str) else task
    if task.objective == "relocate":
        return WaypointExpert(task, noise_std=noise_std, seed=seed)
    return PDMuscleExpert(task, noise_std=noise_std, seed=seed)


class ExpertRegistry:
    """Exactly one active expert per task."""

    def __init__(self, experts: dict[str, Expert] | None = None):
        self._experts: dict[str, Expert] = dict(experts or {})

    @classmethod
    def analytic(cls, tasks, noise_std: float = 0.0, seed: int = 0) -> "ExpertRegistry":
        names = [t if isinstance(t, str) else t.name for t in tasks]
        return cls({n: analytic_expert(n, noise_std, seed + i) for i, n in enumerate(names)})

    def __getitem__(self, task: str) -> Expert:
        try:
            return self._experts[task]
        except KeyError:
            raise KeyError(f"no expert registered for task {task!r}") from None

    def __contains__(self, task: str) -> bool:
        return task in self._experts

    def set(self, task: str, expert: Expert) -> None:
        self._experts[task] = expert

    def tasks(self) -> list[str]:
        return list(self._experts)

    def describe(self) -> dict[str, str]:
        return {k: v.describe() for k, v in self._experts.items()}
