"""Collect/optimize loop for PPO, BC, OBC, OBC-PPO and RL fine-tuning."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Adam, backward
from ..checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from ..experts import CheckpointExpert, ExpertRegistry
from ..policy.distribution import squash
from ..policy.mlp import MLPPolicy, MLPSpec
from ..policy.spec import PolicySpec
from ..policy.transformer import MuscleTransformer
from ..sim.tasks import CATALOG, get_task, observation_signatures, actuator_signatures
from ..vocab import Vocabulary
from .actor import task_tokens
from .config import TrainConfig, format_preset
from .evaluate import evaluate_expert, evaluate_policy
from .losses import LossCoefficients, combined_loss
from .normalize import ReturnNormalizer, RunningStandardizer
from .rollout import Collector

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["phase", "task", "env_steps", "mean_return", "solved_fraction", "imitation_mse",
                  "value_loss", "entropy", "sigma_tilde"]


EVAL_COLUMNS = ["phase", "task", "env_steps", "mean_return", "solved_fraction"]


class TrainingDiverged(RuntimeError):
    """A non-finite loss or gradient stopped training; the last good checkpoint is kept."""


@dataclass
class TrainResult:
    policy: object
    standardizer: RunningStandardizer
    reward_norm: ReturnNormalizer
    metrics: list = field(default_factory=list)
    env_steps: int = 0
    checkpoint: str | None = None

    def as_checkpoint(self, metadata: dict) -> Checkpoint:
        return Checkpoint(self.policy, self.standardizer, self.reward_norm, metadata)


def build_policy(cfg: TrainConfig, seed: int | None = None):
    seed = cfg.seed if seed is None else seed
    if cfg.policy == "mlp":
        tasks = [get_task(t) for t in cfg.tasks]
        spec = MLPSpec(
            max_channels=max(len(observation_signatures(t)) for t in CATALOG),
            max_actuators=max(len(actuator_signatures(t)) for t in CATALOG),
            n_tasks=len(CATALOG),
            window=cfg.policy_spec.get("window", 5),
            hidden=cfg.mlp_hidden,
            init_sigma=cfg.init_std,
        )
        del tasks
        return MLPPolicy(spec, seed=seed)
    spec = PolicySpec.from_dict({**cfg.policy_spec, "init_sigma": cfg.init_std})
    return MuscleTransformer(spec, Vocabulary(), seed=seed)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return ""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return str(x)


def write_metrics(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in METRIC_COLUMNS])


def _snapshot(policy) -> dict:
    return {k: v.data.copy() for k, v in policy.parameters().items()}


def _restore(policy, snap: dict) -> None:
    for k, v in policy.parameters().items():
        v.data = snap[k].copy()


def _sigmoid(x):
    return squash(x)


class Trainer:
    """One training run described by a :class:`TrainConfig`.

    Args:
        cfg: resolved configuration.
        out_dir: where checkpoints and ``metrics.csv`` go (optional).
        policy, standardizer, reward_norm: resume state; fresh ones are
            built when omitted.
        experts: registry used for labels (and for acting under BC).
        metadata: extra fields stored in every checkpoint.
    """

    def __init__(self, cfg: TrainConfig, out_dir: str | None = None, policy=None, standardizer=None,
                 reward_norm=None, experts: ExpertRegistry | None = None, metadata: dict | None = None):
        self.cfg = cfg
        self.out_dir = out_dir
        self.tasks = [get_task(t) for t in cfg.tasks]
        self.policy = policy if policy is not None else build_policy(cfg)
        if standardizer is None:
            standardizer = RunningStandardizer(enabled=cfg.standardize_observations)
        self.standardizer = standardizer
        self.standardizer.frozen = False
        if reward_norm is None:
            reward_norm = ReturnNormalizer(cfg.gamma, enabled=cfg.standardize_returns, per_task=cfg.per_task_reward_norm)
        self.reward_norm = reward_norm
        self.reward_norm.frozen = False
        self.experts = experts if experts is not None else ExpertRegistry.analytic(cfg.tasks, cfg.expert_noise, cfg.seed)
        for t in cfg.tasks:
            self.experts[t]  # fail early on a missing expert
        self.tokens = [task_tokens(self.policy, self.standardizer, t, cfg.disjoint_vocab) for t in self.tasks]
        self.metadata = dict(metadata or {})
        self.coefs = LossCoefficients.from_config(cfg)
        self.rng = np.random.default_rng([cfg.seed, 11])
        window = getattr(self.policy.spec, "window", 5)
        self.collector = Collector(self.policy, self.tokens, cfg.env_counts, cfg.seed, window, self.standardizer,
                                   self.reward_norm, self.experts, cfg.workers, cfg.gamma, cfg.gae_lambda)
        self.optimizer = Adam(self.policy.parameters(), cfg.lr)
        self.metrics: list[dict] = []
        self.evals: list[dict] = []
        self.env_steps = 0
        self.last_good: str | None = None

    # -- helpers -------------------------------------------------------------
    def budget(self) -> int:
        extra = self.cfg.reduced_lr_steps if self.cfg.reduced_lr is not None else 0
        return self.cfg.total_steps + extra

    def current_lr(self) -> float:
        if self.cfg.reduced_lr is not None and self.env_steps >= self.cfg.total_steps:
            return self.cfg.reduced_lr
        return self.cfg.lr

    def checkpoint(self, extra: dict | None = None) -> Checkpoint:
        meta = {
            **self.metadata,
            "algo": self.cfg.algo,
            "env_steps": self.env_steps,
            "seed": self.cfg.seed,
            "tasks": list(self.cfg.tasks),
            "disjoint_vocab": self.cfg.disjoint_vocab,
            "config": self.cfg.to_dict(),
            **(extra or {}),
        }
        return Checkpoint(self.policy, self.standardizer, self.reward_norm, meta)

    def _save(self, name: str) -> str | None:
        if not self.out_dir:
            return None
        path = os.path.join(self.out_dir, name)
        save_checkpoint(path, self.checkpoint())
        return path

    # -- one phase -------------------------------------------------------------
    def optimize(self, buffer) -> dict:
        cfg = self.cfg
        names = [g.tokens.task.name for g in buffer.groups]
        acc = {n: {"im": [0.0, 0], "vl": [0.0, 0], "ent": [0.0, 0]} for n in names}
        self.optimizer.lr = self.current_lr()
        for _ in range(cfg.epochs):
            for mb in buffer.minibatches(cfg.batch_size, self.rng, cfg.standardize_advantage):
                out = self.policy(mb.batch)
                loss = combined_loss(out, mb, self.coefs, cfg.clip)
                if not np.isfinite(loss.data).all():
                    raise TrainingDiverged(f"non-finite loss at env step {self.env_steps}")
                backward(loss)
                self.optimizer.step(cfg.max_grad_norm)
                self.optimizer.zero_grad()
                mask = mb.batch.actuator_mask
                se = ((_sigmoid(out.dist.mean.data) - mb.expert_actions) ** 2 * mask).sum(axis=1)
                ve = (out.value.data.astype(np.float64) - mb.returns) ** 2
                ent = (np.log(out.dist.std.data) * mask).sum(axis=1) + 0.5 * np.log(2 * np.pi * np.e) * mask.sum(axis=1)
                for g in np.unique(mb.group):
                    sel = mb.group == g
                    a = acc[names[g]]
                    a["im"][0] += float(se[sel].sum()); a["im"][1] += int(mask[sel].sum())
                    a["vl"][0] += float(ve[sel].sum()); a["vl"][1] += int(sel.sum())
                    a["ent"][0] += float(ent[sel].sum()); a["ent"][1] += int(sel.sum())
        return {n: {k: (v[0] / v[1] if v[1] else float("nan")) for k, v in d.items()} for n, d in acc.items()}

    def periodic_eval(self, phase: int) -> None:
        """Deterministic evaluation of every task; rows go to ``eval.csv``."""
        for task in self.tasks:
            res = evaluate_policy(self.policy, self.standardizer, task, self.cfg.eval_episodes, self.cfg.seed,
                                  self.cfg.disjoint_vocab)
            self.evals.append({"phase": phase, "task": task.name, "env_steps": self.env_steps,
                               "mean_return": res.mean_return, "solved_fraction": res.solved_fraction})
            log.info("eval phase %d %s solved %.3f", phase, task.name, res.solved_fraction)
        if self.out_dir:
            with open(os.path.join(self.out_dir, "eval.csv"), "w", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(EVAL_COLUMNS)
                for r in self.evals:
                    w.writerow([_fmt(r[c]) for c in EVAL_COLUMNS])

    def run(self, phase_callback=None) -> TrainResult:
        cfg = self.cfg
        log.info("preset %s: %s", cfg.algo, format_preset(cfg))
        if self.out_dir:
            os.makedirs(self.out_dir, exist_ok=True)
        phase = 0
        per_phase = cfg.rollout_steps * self.collector.num_envs
        budget = self.budget()
        while self.env_steps < budget:
            snap = _snapshot(self.policy)
            buffer, stats = self.collector.collect(
                cfg.rollout_steps, act_with_expert=bool(cfg.expert_rollout), label=True,
                stochastic=cfg.stochastic_collection,
            )
            try:
                losses = self.optimize(buffer)
            except (TrainingDiverged, FloatingPointError) as exc:
                _restore(self.policy, snap)
                path = self._save("last_good.ckpt")
                self.last_good = path
                raise TrainingDiverged(f"{exc}; last good checkpoint: {path}") from exc
            # the phase's learning rate is chosen from the steps collected before it
            self.env_steps += per_phase
            sigma = self.policy.sigma_tilde
            for t in cfg.tasks:
                succ = stats.successes.get(t)
                rets = stats.returns.get(t)
                l = losses.get(t, {})
                self.metrics.append({
                    "phase": phase,
                    "task": t,
                    "env_steps": self.env_steps,
                    "mean_return": float(np.mean(rets)) if rets else None,
                    "solved_fraction": float(np.mean(succ)) if succ else None,
                    "imitation_mse": l.get("im"),
                    "value_loss": l.get("vl"),
                    "entropy": l.get("ent"),
                    "sigma_tilde": sigma,
                })
            log.info("phase %d steps %d lr %.2e %s", phase, self.env_steps, self.optimizer.lr,
                     " ".join(f"{r['task']}={_fmt(r['solved_fraction'])}/{_fmt(r['imitation_mse'])}"
                              for r in self.metrics[-len(cfg.tasks):]))
            if self.out_dir:
                write_metrics(os.path.join(self.out_dir, "metrics.csv"), self.metrics)
                if cfg.checkpoint_every and (phase + 1) % cfg.checkpoint_every == 0:
                    self.last_good = self._save("last_good.ckpt")
            if cfg.eval_every and (phase + 1) % cfg.eval_every == 0:
                self.periodic_eval(phase)
            if phase_callback is not None:
                phase_callback(self, phase)
            phase += 1
        self.collector.close()
        path = self._save("final.ckpt")
        return TrainResult(self.policy, self.standardizer, self.reward_norm, self.metrics, self.env_steps, path)


def train(cfg: TrainConfig, out_dir: str | None = None, experts: ExpertRegistry | None = None, **kw) -> TrainResult:
    return Trainer(cfg, out_dir, experts=experts, **kw).run()


def finetune(ckpt: Checkpoint, task: str, cfg: TrainConfig, out_dir: str | None = None) -> TrainResult:
    """Single-task PPO from a generalist checkpoint with the action std reset."""
    get_task(task)
    if cfg.algo != "finetune":
        raise ValueError("finetune needs the finetune preset")
    cfg = cfg.replace(tasks=[task])
    ckpt.policy.reset_sigma(cfg.init_std)
    log.info("finetune %s: sigma_tilde reset to %g", task, ckpt.policy.sigma_tilde)
    trainer = Trainer(cfg, out_dir, policy=ckpt.policy, standardizer=ckpt.standardizer,
                      reward_norm=ckpt.reward_norm, metadata={"parent": ckpt.metadata.get("algo"), "specialist": task})
    trainer.metadata["sigma_tilde_start"] = ckpt.policy.sigma_tilde
    return trainer.run()


def select_experts(generalist_tasks, specialists: dict, episodes: int, seed: int, base: ExpertRegistry | None = None):
    """Registry with each specialist swapped in only where it beats the current expert.

    Returns ``(registry, report)`` where ``report`` maps task to the two
    solved fractions and the decision.
    """
    base = base or ExpertRegistry.analytic(generalist_tasks)
    reg = ExpertRegistry({t: base[t] for t in generalist_tasks})
    report = {}
    for t in generalist_tasks:
        task = get_task(t)
        prior = evaluate_expert(base[t], task, episodes, seed).solved_fraction
        entry = {"expert": prior, "specialist": None, "replaced": False}
        path = specialists.get(t)
        if path:
            sp_ckpt = load_checkpoint(path)
            sp = evaluate_policy(sp_ckpt.policy, sp_ckpt.standardizer, task, episodes, seed,
                                 sp_ckpt.metadata.get("disjoint_vocab", False)).solved_fraction
            entry["specialist"] = sp
            if sp > prior:
                reg.set(t, CheckpointExpert(task, sp_ckpt, path=path))
                entry["replaced"] = True
        report[t] = entry
    return reg, report


def distill(ckpt: Checkpoint, registry: ExpertRegistry, cfg: TrainConfig, out_dir: str | None = None) -> TrainResult:
    """Resume OBC from the generalist against the (partly replaced) expert registry."""
    for t in cfg.tasks:
        if t not in registry:
            raise KeyError(f"no expert registered for task {t!r}")
    trainer = Trainer(cfg, out_dir, policy=ckpt.policy, standardizer=ckpt.standardizer,
                      reward_norm=ckpt.reward_norm, experts=registry,
                      metadata={"parent": ckpt.metadata.get("algo"), "experts": registry.describe()})
    return trainer.run()
