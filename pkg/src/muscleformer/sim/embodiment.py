"""Planar muscle-driven embodiments with decoupled joint dynamics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .muscle import MuscleParams, activation_substeps, muscle_force

DT = 0.01
FRAME_SKIP = 5
ACTIVATION_SUBSTEPS = 4


@dataclass(frozen=True)
class Joint:
    name: str
    inertia: float       # kg m^2
    damping: float       # N m s / rad
    lower: float         # rad
    upper: float
    reference: float     # angle at which every muscle sits at l0


@dataclass(frozen=True)
class Embodiment:
    """Joints, muscles and (for arms) link lengths of one body.

    Joint dynamics use a diagonal inertia; the muscles couple the joints
    only through their shared moment arms.
    """

    name: str
    joints: tuple[Joint, ...]
    muscles: tuple[MuscleParams, ...]
    links: tuple[float, ...] = ()
    dt: float = DT
    frame_skip: int = FRAME_SKIP

    def __post_init__(self):
        for m in self.muscles:
            if len(m.moment_arms) != len(self.joints):
                raise ValueError(f"muscle {m.name} needs one moment arm per joint")
        r = self.moment_arms
        for j, joint in enumerate(self.joints):
            if not ((r[:, j] > 0).any() and (r[:, j] < 0).any()):
                raise ValueError(f"joint {joint.name} lacks an antagonist pair")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_muscles(self) -> int:
        return len(self.muscles)

    @property
    def moment_arms(self) -> np.ndarray:
        """(n_muscles, n_joints) signed moment arms."""
        return np.array([m.moment_arms for m in self.muscles], dtype=np.float64)

    def _vec(self, attr: str) -> np.ndarray:
        return np.array([getattr(m, attr) for m in self.muscles], dtype=np.float64)

    @property
    def f_max(self) -> np.ndarray:
        return self._vec("f_max")

    @property
    def l0(self) -> np.ndarray:
        return self._vec("l0")

    @property
    def k_p(self) -> np.ndarray:
        return self._vec("k_p")

    @property
    def v_max(self) -> np.ndarray:
        return self._vec("v_max")

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.lower for j in self.joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.upper for j in self.joints])

    @property
    def inertia(self) -> np.ndarray:
        return np.array([j.inertia for j in self.joints])

    @property
    def damping(self) -> np.ndarray:
        return np.array([j.damping for j in self.joints])

    @property
    def reference(self) -> np.ndarray:
        return np.array([j.reference for j in self.joints])

    # -- kinematics -----------------------------------------------------
    def muscle_lengths(self, q: np.ndarray) -> np.ndarray:
        """``l = l0 - r (q - q_ref)``, shape (..., n_muscles)."""
        return self.l0 - (q - self.reference) @ self.moment_arms.T

    def muscle_velocities(self, qd: np.ndarray) -> np.ndarray:
        """Lengthening velocity ``dl/dt = -r qd``."""
        return -qd @ self.moment_arms.T

    def tip(self, q: np.ndarray) -> np.ndarray:
        """Planar forward kinematics of a serial chain rooted at the origin."""
        if not self.links:
            raise ValueError(f"{self.name} has no link geometry")
        angle = np.zeros(q.shape[:-1])
        pos = np.zeros(q.shape[:-1] + (2,))
        for j, length in enumerate(self.links):
            angle = angle + q[..., j]
            pos = pos + length * np.stack([np.cos(angle), np.sin(angle)], axis=-1)
        return pos

    def jacobian(self, q: np.ndarray) -> np.ndarray:
        """d tip / d q, shape (..., 2, n_joints)."""
        n = len(self.links)
        cum = np.cumsum(q[..., :n], axis=-1)
        jac = np.zeros(q.shape[:-1] + (2, n))
        for j in range(n):
            for k in range(j, n):
                jac[..., 0, j] -= self.links[k] * np.sin(cum[..., k])
                jac[..., 1, j] += self.links[k] * np.cos(cum[..., k])
        return jac

    def joint_to_tip_distance_sq(self, q: np.ndarray) -> np.ndarray:
        """Squared distance from each joint to the tip, used for payload inertia."""
        tip = self.tip(q)
        out = np.zeros(q.shape[:-1] + (self.n_joints,))
        origin = np.zeros(q.shape[:-1] + (2,))
        angle = np.zeros(q.shape[:-1])
        for j, length in enumerate(self.links):
            out[..., j] = ((tip - origin) ** 2).sum(axis=-1)
            angle = angle + q[..., j]
            origin = origin + length * np.stack([np.cos(angle), np.sin(angle)], axis=-1)
        return out

    # -- dynamics -------------------------------------------------------
    def forces(self, act: np.ndarray, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
        l = self.muscle_lengths(q)
        v_short = -self.muscle_velocities(qd)
        return muscle_force(act, l, v_short, self.f_max, self.l0, self.k_p, self.v_max)

    def substep(self, act, u, q, qd, extra_inertia=None, tau_ext=None):
        """Advance one physics step of ``dt`` (semi-implicit Euler).

        Returns the new ``(act, q, qd, forces)``.
        """
        act = activation_substeps(act, u, self.dt, ACTIVATION_SUBSTEPS)
        force = self.forces(act, q, qd)
        torque = force @ self.moment_arms - self.damping * qd
        if tau_ext is not None:
            torque = torque + tau_ext
        inertia = self.inertia if extra_inertia is None else self.inertia + extra_inertia
        qd = qd + self.dt * torque / inertia
        q = q + self.dt * qd
        lo, hi = self.lower, self.upper
        hit_lo, hit_hi = q < lo, q > hi
        q = np.clip(q, lo, hi)
        qd = np.where((hit_lo & (qd < 0)) | (hit_hi & (qd > 0)), 0.0, qd)
        return act, q, qd, force


def mini_elbow() -> Embodiment:
    joints = (Joint("r_elbow_flex", inertia=0.03, damping=0.25, lower=0.0, upper=2.4, reference=1.2),)
    muscles = (
        MuscleParams("BICshort", f_max=250.0, moment_arms=(0.025,), l0=0.1),
        MuscleParams("TRImed", f_max=250.0, moment_arms=(-0.025,), l0=0.1),
    )
    return Embodiment("MiniElbow", joints, muscles, links=(0.3,))


def mini_arm() -> Embodiment:
    joints = (
        Joint("shoulder_elv", inertia=0.06, damping=0.3, lower=-1.2, upper=2.0, reference=0.4),
        Joint("elbow_flexion", inertia=0.03, damping=0.2, lower=0.0, upper=2.6, reference=1.3),
    )
    muscles = (
        MuscleParams("DELT1", f_max=300.0, moment_arms=(0.03, 0.0), l0=0.15),
        MuscleParams("DELT3", f_max=300.0, moment_arms=(-0.03, 0.0), l0=0.15),
        MuscleParams("BRA", f_max=250.0, moment_arms=(0.0, 0.025), l0=0.1),
        MuscleParams("TRIlat", f_max=250.0, moment_arms=(0.0, -0.025), l0=0.1),
        MuscleParams("BIClong", f_max=200.0, moment_arms=(0.02, 0.02), l0=0.15),
        MuscleParams("TRIlong", f_max=200.0, moment_arms=(-0.02, -0.02), l0=0.15),
    )
    return Embodiment("MiniArm", joints, muscles, links=(0.3, 0.3))
