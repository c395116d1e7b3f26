"""Flat-observation MLP baseline for multi-task PPO.

Every task's observation window is flattened and zero-padded to the largest
flat size in the suite, then concatenated with a learned task embedding.
The action head emits the suite-wide maximum number of actuators; surplus
outputs are ignored by tasks with fewer muscles.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import Tensor, no_grad
from ..autodiff import ops
from .distribution import ActionDistribution
from .layers import Linear, Module
from .tokens import TokenBatch, TooManyChannelsError
from .transformer import PolicyOutput


@dataclass
class MLPSpec:
    max_channels: int
    max_actuators: int
    n_tasks: int
    window: int = 5
    hidden: int = 64
    task_embedding_dim: int = 8
    init_sigma: float = 1.0

    @property
    def flat_dim(self) -> int:
        return self.max_channels * self.window

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MLPSpec":
        return cls(**d)


class _Trunk(Module):
    def __init__(self, n_in, hidden, n_out, rng, name):
        self.fc1 = Linear(n_in, hidden, rng, name=f"{name}.fc1")
        self.fc2 = Linear(hidden, hidden, rng, name=f"{name}.fc2")
        self.head = Linear(hidden, n_out, rng, name=f"{name}.head")

    def __call__(self, x: Tensor) -> Tensor:
        return self.head(ops.tanh(self.fc2(ops.tanh(self.fc1(x)))))


class MLPPolicy(Module):
    """Separate two-hidden-layer policy and value trunks with a state-free log-std."""

    kind = "mlp"

    def __init__(self, spec: MLPSpec, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.spec = spec
        n_in = spec.flat_dim + spec.task_embedding_dim
        self.task_embedding = Tensor(
            rng.normal(0.0, 1.0, size=(spec.n_tasks, spec.task_embedding_dim)), requires_grad=True, name="task_embedding"
        )
        self.pi = _Trunk(n_in, spec.hidden, spec.max_actuators, rng, "pi")
        self.pi.head.weight.data *= 0.01
        self.vf = _Trunk(n_in, spec.hidden, 1, rng, "vf")
        self.log_std = Tensor(np.full(spec.max_actuators, np.log(spec.init_sigma)), requires_grad=True, name="log_std")

    def parameters(self) -> dict[str, Tensor]:
        return self.named_parameters()

    @property
    def sigma_tilde(self) -> float:
        return float(np.exp(self.log_std.data).mean())

    def reset_sigma(self, value: float) -> None:
        self.log_std.data[:] = np.log(value)

    def flatten(self, batch: TokenBatch) -> np.ndarray:
        b, t, w = batch.values.shape
        if t > self.spec.max_channels:
            raise TooManyChannelsError(f"{t} channels exceed the MLP input size {self.spec.max_channels}")
        flat = np.zeros((b, self.spec.max_channels, w), dtype=self.log_std.dtype)
        flat[:, :t] = batch.values * batch.sensor_mask[..., None]
        return flat.reshape(b, -1)

    def __call__(self, batch: TokenBatch) -> PolicyOutput:
        dt = self.log_std.dtype
        b, a = batch.actuator_mask.shape
        onehot = np.zeros((b, self.spec.n_tasks), dtype=dt)
        onehot[np.arange(b), batch.task_id] = 1.0
        emb = ops.matmul(Tensor(onehot, dtype=dt), self.task_embedding)
        x = ops.concat([Tensor(self.flatten(batch), dtype=dt), emb], axis=-1)
        mask = batch.actuator_mask
        mean = ops.mul(self.pi(x)[:, :a], mask.astype(dt))
        std = ops.where(mask, ops.add(ops.exp(self.log_std[:a]), np.zeros((b, a), dtype=dt)), np.ones((b, a), dtype=dt))
        value = ops.reshape(self.vf(x), (b,))
        return PolicyOutput(ActionDistribution(mean, std, mask), value, None, None)

    def act(self, batch: TokenBatch) -> PolicyOutput:
        with no_grad():
            return self(batch)
