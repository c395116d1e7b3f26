"""Shared builders for tests."""

import numpy as np

from muscleformer.policy import MuscleTransformer, PolicySpec
from muscleformer.policy.tokens import TokenBatch
from muscleformer.trainer.config import make_config
from muscleformer.vocab import Vocabulary, sig

SENSOR_WORDS = ["alpha", "beta", "gamma", "delta", "muscle", "joint"]
CHANNELS = ["length", "velocity", "force", "activation", "position"]


def small_spec(**kw):
    base = dict(embedding_dim=16, feedforward_dim=32, heads=4, encoder_layers=2, decoder_layers=2, embedding_init_std=1.0)
    base.update(kw)
    return PolicySpec(**base)


def small_policy(seed=0, n_sensor=12, n_act=6, **kw):
    """Transformer with ``n_sensor`` sensor and ``n_act`` actuator signatures registered."""
    policy = MuscleTransformer(small_spec(**kw), Vocabulary(), seed=seed)
    sensor_ids, act_ids = [], []
    for i in range(n_sensor):
        s = sig(SENSOR_WORDS[i % 4], f"m{i // 4}", "muscle", CHANNELS[i % len(CHANNELS)])
        sensor_ids.append(policy.register_signature(s))
    for i in range(n_act):
        act_ids.append(policy.register_signature(sig(f"act{i}", "muscle", kind="actuator")))
    return policy, np.array(sensor_ids), np.array(act_ids)


def random_batch(rng, sensor_ids, act_ids, b=4, window=5, dtype=np.float32, min_tokens=1, min_act=1):
    """Rows with random subsets of the given signatures, padded to the batch maxima."""
    rows = []
    for _ in range(b):
        nt = rng.integers(min_tokens, len(sensor_ids) + 1)
        na = rng.integers(min_act, len(act_ids) + 1)
        s = rng.choice(sensor_ids, size=nt, replace=False)
        a = rng.choice(act_ids, size=na, replace=False)
        rows.append((rng.normal(size=(nt, window)), s, a))
    t = max(len(r[1]) for r in rows)
    na = max(len(r[2]) for r in rows)
    values = np.zeros((b, t, window), dtype=dtype)
    sids = np.zeros((b, t), dtype=np.int64)
    aids = np.zeros((b, na), dtype=np.int64)
    sm = np.zeros((b, t), dtype=bool)
    am = np.zeros((b, na), dtype=bool)
    for i, (v, s, a) in enumerate(rows):
        values[i, : len(s)] = v
        sids[i, : len(s)] = s
        sm[i, : len(s)] = True
        aids[i, : len(a)] = a
        am[i, : len(a)] = True
    return TokenBatch(values, sids, sm, aids, am, np.zeros(b, dtype=np.int64))


def pad_batch(batch, extra_tokens, extra_act):
    b, t, w = batch.values.shape
    a = batch.actuator_ids.shape[1]
    values = np.zeros((b, t + extra_tokens, w), dtype=batch.values.dtype)
    values[:, :t] = batch.values
    return TokenBatch(
        values,
        np.pad(batch.sensor_ids, ((0, 0), (0, extra_tokens))),
        np.pad(batch.sensor_mask, ((0, 0), (0, extra_tokens))),
        np.pad(batch.actuator_ids, ((0, 0), (0, extra_act))),
        np.pad(batch.actuator_mask, ((0, 0), (0, extra_act))),
        batch.task_id,
    )


def permute_batch(batch, sensor_perm, act_perm):
    return TokenBatch(
        batch.values[:, sensor_perm],
        batch.sensor_ids[:, sensor_perm],
        batch.sensor_mask[:, sensor_perm],
        batch.actuator_ids[:, act_perm],
        batch.actuator_mask[:, act_perm],
        batch.task_id,
    )


TINY_POLICY = {"embedding_dim": 16, "feedforward_dim": 32, "heads": 2, "encoder_layers": 1,
               "decoder_layers": 1, "embedding_init_std": 1.0}


def tiny_config(algo="obc", tasks=("ElbowPose", "ReachNear"), **kw):
    base = dict(tasks=list(tasks), env_counts={t: 2 for t in tasks}, rollout_steps=16, batch_size=32,
                total_steps=64 * len(tasks), reduced_lr_steps=0, policy_spec=dict(TINY_POLICY))
    base.update(kw)
    return make_config(algo, **base)
