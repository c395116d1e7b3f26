"""Simplified Hill-type muscle: activation dynamics, force-length, force-velocity.

All functions broadcast over leading dimensions so a whole vector of
environments is advanced with one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TAU_ACT = 0.01
TAU_DEACT = 0.04
V_MAX_PER_L0 = 10.0     # maximal shortening velocity, optimal lengths per second
FV_MAX = 1.5


@dataclass(frozen=True)
class MuscleParams:
    """One muscle.

    Attributes:
        name: anatomy word used in the muscle's signatures.
        f_max: maximal isometric force (N).
        moment_arms: signed moment arm per joint of the embodiment (m).
        l0: optimal fibre length (m); also the length at the reference pose.
        k_p: passive stiffness beyond ``l0`` (N/m).
    """

    name: str
    f_max: float
    moment_arms: tuple[float, ...]
    l0: float
    k_p: float = 200.0
    tau_act: float = TAU_ACT
    tau_deact: float = TAU_DEACT
    words: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.f_max <= 0:
            raise ValueError(f"{self.name}: F_max must be positive")
        if not self.tau_act < self.tau_deact:
            raise ValueError(f"{self.name}: tau_act must be below tau_deact")
        if self.l0 <= 0:
            raise ValueError(f"{self.name}: l0 must be positive")

    @property
    def v_max(self) -> float:
        return V_MAX_PER_L0 * self.l0

    @property
    def anatomy(self) -> tuple[str, ...]:
        return self.words or (self.name,)


def activation_step(a, u, dt, tau_act=TAU_ACT, tau_deact=TAU_DEACT):
    """One explicit Euler step of first-order activation dynamics, clipped to [0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    tau = np.where(u > a, tau_act, tau_deact)
    return np.clip(a + dt * (u - a) / tau, 0.0, 1.0)


def activation_substeps(a, u, dt, n_sub=4, tau_act=TAU_ACT, tau_deact=TAU_DEACT):
    h = dt / n_sub
    for _ in range(n_sub):
        a = activation_step(a, u, h, tau_act, tau_deact)
    return a


def force_length(l, l0):
    return np.maximum(0.0, 1.0 - ((l - l0) / (0.5 * l0)) ** 2)


def force_velocity(v_short, v_max):
    """Hill force-velocity factor; ``v_short`` is the shortening velocity.

    Shortening (positive) reduces force to zero at ``v_max``; lengthening
    raises it up to 1.5x.
    """
    return np.clip(1.0 - v_short / v_max, 0.0, FV_MAX)


def muscle_force(a, l, v_short, f_max, l0, k_p, v_max=None):
    """``a F_max f_l(l) f_v(v) + k_p max(0, l - l0)``."""
    v_max = V_MAX_PER_L0 * np.asarray(l0) if v_max is None else v_max
    active = a * f_max * force_length(l, l0) * force_velocity(v_short, v_max)
    return active + k_p * np.maximum(0.0, l - l0)
