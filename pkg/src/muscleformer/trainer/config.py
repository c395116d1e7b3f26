"""Training configuration and per-algorithm presets.

``PAPER_PRESETS`` holds the published hyperparameters of each training
regime verbatim. ``DESK_OVERRIDES`` rescales budgets and learning rates for
CPU-sized runs; :func:`make_config` applies the overrides unless
``desk=False``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, field, fields

import yaml

ALGOS = ("ppo", "bc", "obc", "obc-ppo", "finetune")

_SHARED = {
    "rollout_steps": 512,
    "epochs": 3,
    "batch_size": 128,
    "gamma": 0.99,
    "gae_lambda": 0.95,
    "clip": 0.2,
    "max_grad_norm": 0.5,
    "value_coef": 0.5,
    "standardize_advantage": True,
    "standardize_observations": True,
}

PAPER_PRESETS: dict[str, dict] = {
    "ppo": {**_SHARED, "init_std": 1.0, "entropy_coef": 1e-6, "pg_coef": 1.0, "imitation_coef": 0.0,
            "lr": 2e-5, "reduced_lr": None, "expert_rollout": None, "imitation_loss": None},
    "bc": {**_SHARED, "init_std": 1.0, "entropy_coef": 0.0, "pg_coef": 0.0, "imitation_coef": 1.0,
           "lr": 1e-3, "reduced_lr": 1e-5, "expert_rollout": True, "imitation_loss": "mse"},
    "obc": {**_SHARED, "init_std": 1.0, "entropy_coef": 0.0, "pg_coef": 0.0, "imitation_coef": 1.0,
            "lr": 1e-3, "reduced_lr": 1e-5, "expert_rollout": False, "imitation_loss": "mse"},
    "obc-ppo": {**_SHARED, "init_std": 1.0, "entropy_coef": 1e-6, "pg_coef": 1.0, "imitation_coef": 1.0,
                "lr": 1e-4, "reduced_lr": 1e-5, "expert_rollout": False, "imitation_loss": "mse"},
    "finetune": {**_SHARED, "init_std": 1e-3, "entropy_coef": 1e-6, "pg_coef": 1.0, "imitation_coef": 0.0,
                 "lr": 2e-6, "reduced_lr": None, "expert_rollout": None, "imitation_loss": None},
}

# published step budgets: main phase, reduced-LR phase
PAPER_BUDGET = {"total_steps": 50_000_000, "reduced_lr_steps": 5_000_000}

DESK_BUDGET = {"total_steps": 2_000_000, "reduced_lr_steps": 200_000}

DESK_OVERRIDES: dict[str, dict] = {
    "ppo": {"lr": 3e-4},
    "bc": {"reduced_lr": 1e-4},
    "obc": {"reduced_lr": 1e-4},
    "obc-ppo": {"lr": 3e-4, "reduced_lr": 3e-5},
    "finetune": {"lr": 3e-5},
}

DEFAULT_ENV_COUNTS = {"ElbowPose": 4, "ReachNear": 4, "ReachFar": 4, "RelocateLite": 8}

DESK_POLICY = {
    "embedding_dim": 64,
    "feedforward_dim": 128,
    "heads": 4,
    "encoder_layers": 2,
    "decoder_layers": 2,
    # unit-scale word embeddings keep channel identity visible next to the value encoding
    "embedding_init_std": 1.0,
}


@dataclass
class TrainConfig:
    """Everything one training run needs. See docs/config.md for the schema."""

    algo: str = "obc"
    tasks: list = field(default_factory=lambda: list(DEFAULT_ENV_COUNTS))
    env_counts: dict = field(default_factory=lambda: dict(DEFAULT_ENV_COUNTS))
    total_steps: int = DESK_BUDGET["total_steps"]
    reduced_lr_steps: int = DESK_BUDGET["reduced_lr_steps"]
    rollout_steps: int = 128
    epochs: int = 3
    batch_size: int = 128
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    max_grad_norm: float = 0.5
    lr: float = 1e-3
    reduced_lr: float | None = 1e-4
    pg_coef: float = 0.0
    imitation_coef: float = 1.0
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    init_std: float = 1.0
    expert_rollout: bool | None = False
    imitation_loss: str | None = "mse"
    standardize_advantage: bool = True
    standardize_observations: bool = True
    standardize_returns: bool = True
    per_task_reward_norm: bool = True
    disjoint_vocab: bool = False
    policy: str = "transformer"
    policy_spec: dict = field(default_factory=lambda: dict(DESK_POLICY))
    mlp_hidden: int = 64
    expert_noise: float = 0.0
    stochastic_collection: bool = True
    eval_episodes: int = 200
    eval_every: int = 0
    checkpoint_every: int = 10
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algo {self.algo!r}; choose from {ALGOS}")
        if self.policy not in ("transformer", "mlp"):
            raise ValueError(f"unknown policy {self.policy!r}")
        for t in self.tasks:
            self.env_counts.setdefault(t, 2)
        if self.rollout_steps < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("rollout_steps, batch_size and epochs must be positive")

    @property
    def imitating(self) -> bool:
        return self.imitation_coef > 0

    def num_envs(self) -> int:
        return sum(self.env_counts[t] for t in self.tasks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["env_counts"] = {t: self.env_counts[t] for t in self.tasks}
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)


def preset(algo: str, desk: bool = True) -> dict:
    if algo not in PAPER_PRESETS:
        raise ValueError(f"unknown algo {algo!r}; choose from {ALGOS}")
    p = dict(PAPER_PRESETS[algo])
    if desk:
        p.update(DESK_OVERRIDES[algo])
        p["rollout_steps"] = 128
    else:
        p.update(PAPER_BUDGET)
    return p


def make_config(algo: str, desk: bool = True, **overrides) -> TrainConfig:
    p = preset(algo, desk)
    p.update(overrides)
    return TrainConfig(algo=algo, **p)


def format_preset(cfg: TrainConfig) -> str:
    keys = ["init_std", "batch_size", "entropy_coef", "value_coef", "pg_coef", "imitation_coef", "lr", "reduced_lr",
            "expert_rollout", "imitation_loss", "rollout_steps", "epochs", "gamma", "gae_lambda", "clip", "max_grad_norm",
            "standardize_advantage", "standardize_observations"]
    return " ".join(f"{k}={getattr(cfg, k)}" for k in keys)
