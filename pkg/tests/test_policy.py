import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import pad_batch, permute_batch, random_batch, small_policy
from muscleformer.autodiff import Tensor, ops, precision
from muscleformer.policy import (
    HistoryWindow,
    MLPPolicy,
    MLPSpec,
    MuscleTransformer,
    PolicySpec,
    TooManyChannelsError,
    analytic_parameter_count,
    log_prob_numpy,
    mlp_parameter_count,
    model_summary,
    noise_std,
    noise_std_numpy,
    squash,
    unsquash,
)
from muscleformer.policy.distribution import ActionDistribution
from muscleformer.policy.tokens import TokenBatch
from muscleformer.vocab import Vocabulary, compose_role_embedding, sig


def _outputs(policy, batch):
    out = policy.act(batch)
    return out.dist.mean.data, out.dist.std.data, out.value.data


# -- parameter accounting ----------------------------------------------------

def test_full_size_parameter_count():
    spec = PolicySpec(tokenizer_extra_feature=True)
    model = MuscleTransformer(spec, Vocabulary([f"w{i}" for i in range(212)]))
    assert len(model.vocab) == 214
    _, total = model_summary(model)
    assert total == 4_393_732
    counts = analytic_parameter_count(spec, 214)
    assert counts["total"] == 4_393_732
    assert counts["table"] == 27_392
    assert counts["tokenizer"] == 896
    assert counts["action_net"] == counts["value_net"] == counts["log_std_net"] == 129


def test_analytic_count_matches_summary_for_small_specs():
    for d, ff, layers in [(16, 32, 1), (32, 64, 2), (64, 128, 3)]:
        spec = PolicySpec(embedding_dim=d, feedforward_dim=ff, encoder_layers=layers, decoder_layers=layers)
        model = MuscleTransformer(spec, Vocabulary(["a", "b", "c"]))
        assert model_summary(model)[1] == analytic_parameter_count(spec, len(model.vocab))["total"]


def test_mlp_count_matches_summary():
    spec = MLPSpec(max_channels=39, max_actuators=6, n_tasks=4, hidden=32)
    model = MLPPolicy(spec)
    assert model_summary(model)[1] == mlp_parameter_count(spec)


def test_spec_validation():
    with pytest.raises(ValueError, match="divisible"):
        PolicySpec(embedding_dim=30, heads=4)
    with pytest.raises(ValueError):
        PolicySpec(dropout=0.1)


# -- tokenizer -------------------------------------------------------------------

def test_zero_values_give_role_embedding():
    policy, sids, aids = small_policy()
    b = TokenBatch(np.zeros((1, 3, 5), np.float32), sids[None, :3], np.ones((1, 3), bool),
                   aids[None, :2], np.ones((1, 2), bool), np.zeros(1, np.int64))
    tok = policy.sensor_tokens(b, policy.role_embeddings()).data[0]
    for j in range(3):
        s = policy.registry.signatures[sids[j]]
        np.testing.assert_allclose(tok[j], compose_role_embedding(policy.table, s), rtol=1e-5, atol=1e-6)


def test_same_values_different_signatures_differ():
    policy, sids, aids = small_policy()
    v = np.ones((1, 2, 5), np.float32)
    b = TokenBatch(v, sids[None, :2], np.ones((1, 2), bool), aids[None, :1], np.ones((1, 1), bool), np.zeros(1, np.int64))
    tok = policy.sensor_tokens(b, policy.role_embeddings()).data[0]
    assert np.abs(tok[0] - tok[1]).max() > 1e-3


def test_history_window_repeats_first_value():
    h = HistoryWindow(2, 3, 5)
    h.reset(slice(None), np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    assert np.all(h.data[0, 1] == 2.0)
    h.push(np.array([[7.0, 8.0, 9.0], [0.0, 0.0, 0.0]]))
    np.testing.assert_array_equal(h.data[0, 0], [1, 1, 1, 1, 7])


def test_too_many_channels():
    policy, sids, aids = small_policy(max_sensor_tokens=4)
    b = TokenBatch(np.zeros((1, 6, 5), np.float32), np.resize(sids, (1, 6)), np.ones((1, 6), bool),
                   aids[None, :1], np.ones((1, 1), bool), np.zeros(1, np.int64))
    with pytest.raises(TooManyChannelsError):
        policy.act(b)


# -- invariances --------------------------------------------------------------------

def test_padding_invariance_random_batches():
    policy, sids, aids = small_policy(seed=3)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        b = random_batch(rng, sids, aids)
        ref = _outputs(policy, b)
        padded = _outputs(policy, pad_batch(b, int(rng.integers(1, 5)), int(rng.integers(1, 3))))
        a = b.actuator_ids.shape[1]
        mask = b.actuator_mask
        worst = max(worst, np.abs((padded[0][:, :a] - ref[0]) * mask).max(),
                    np.abs((padded[1][:, :a] - ref[1]) * mask).max(), np.abs(padded[2] - ref[2]).max())
    assert worst <= 1e-6


def test_permutation_equivariance():
    policy, sids, aids = small_policy(seed=4)
    rng = np.random.default_rng(1)
    for _ in range(20):
        b = random_batch(rng, sids, aids, min_tokens=len(sids), min_act=len(aids))
        ps, pa = rng.permutation(b.values.shape[1]), rng.permutation(b.actuator_ids.shape[1])
        m0, s0, v0 = _outputs(policy, b)
        m1, s1, v1 = _outputs(policy, permute_batch(b, ps, pa))
        np.testing.assert_allclose(m1, m0[:, pa], atol=1e-5)
        np.testing.assert_allclose(s1, s0[:, pa], atol=1e-5)
        np.testing.assert_allclose(v1, v0, atol=1e-5)


def test_value_invariant_to_actuator_permutation_and_count():
    policy, sids, aids = small_policy(seed=5)
    rng = np.random.default_rng(2)
    b = random_batch(rng, sids, aids, min_act=len(aids))
    _, _, v0 = _outputs(policy, b)
    _, _, v1 = _outputs(policy, permute_batch(b, np.arange(b.values.shape[1]), rng.permutation(len(aids))))
    np.testing.assert_array_equal(v0, v1)


def test_value_responds_to_every_sensor_token(f64):
    policy, sids, aids = small_policy(seed=6)
    for p in policy.parameters().values():
        p.data = p.data.astype(np.float64)
    rng = np.random.default_rng(3)
    b = random_batch(rng, sids, aids, b=1, min_tokens=len(sids), dtype=np.float64)
    _, _, v0 = _outputs(policy, b)
    for j in range(b.values.shape[1]):
        vals = b.values.copy()
        vals[0, j] += 0.5
        b2 = TokenBatch(vals, b.sensor_ids, b.sensor_mask, b.actuator_ids, b.actuator_mask, b.task_id)
        assert abs(_outputs(policy, b2)[2][0] - v0[0]) > 1e-9


def test_single_token_encoder_matches_brute_force(f64):
    policy, sids, aids = small_policy(seed=7)
    for p in policy.parameters().values():
        p.data = p.data.astype(np.float64)
    x = np.random.default_rng(4).normal(size=(1, 1, 16))
    enc = policy.encoder

    def ln(v, layer):
        mu = v.mean(-1, keepdims=True)
        var = ((v - mu) ** 2).mean(-1, keepdims=True)
        out = (v - mu) / np.sqrt(var + layer.eps) * layer.weight.data
        return out + layer.bias.data if layer.bias is not None else out

    h = x.copy()
    for layer in enc.layers:
        a = layer.attn
        v = ln(h, layer.norm1) @ a.in_weight.data[:, 32:] + a.in_bias.data[32:]   # weight 1 on the only key
        h = h + v @ a.out.weight.data + a.out.bias.data
        z = ln(h, layer.norm2)
        f = np.maximum(z @ layer.ff.fc1.weight.data + layer.ff.fc1.bias.data, 0)
        h = h + f @ layer.ff.fc2.weight.data + layer.ff.fc2.bias.data
    want = ln(h, enc.norm)
    got = enc(Tensor(x), np.ones((1, 1), bool)).data
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_mirrored_actuators_get_equal_means():
    policy, sids, aids = small_policy(seed=8)
    w = policy.table.weight.data
    a0, a1 = (policy.registry.signatures[i] for i in aids[:2])
    # the two actuators differ by one word each; make those rows equal
    i0 = policy.vocab.index(a0.words[0])
    i1 = policy.vocab.index(a1.words[0])
    w[i1] = w[i0]
    b = random_batch(np.random.default_rng(5), sids, aids, b=1, min_tokens=len(sids))
    b = TokenBatch(b.values, b.sensor_ids, b.sensor_mask, aids[None, :2], np.ones((1, 2), bool), b.task_id)
    m, s, _ = _outputs(policy, b)
    assert m[0, 0] == pytest.approx(m[0, 1], abs=1e-6)
    assert s[0, 0] == pytest.approx(s[0, 1], abs=1e-6)


def test_masked_actuator_slots_emit_nothing():
    policy, sids, aids = small_policy(seed=9)
    b = random_batch(np.random.default_rng(6), sids, aids, b=8)
    m, s, _ = _outputs(policy, b)
    assert np.all(m[~b.actuator_mask] == 0)
    assert np.all(s[~b.actuator_mask] == 1)


# -- noise formula and distribution -----------------------------------------------------

def test_noise_formula_random_draws():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        n_a = int(rng.integers(1, 17))
        d = int(rng.integers(2, 33))
        E = rng.normal(size=(d, n_a)) * rng.uniform(0.1, 5)
        x = rng.normal(size=d)
        st_ = float(np.exp(rng.uniform(-7, 1)))
        logits = (x @ E)[None, :].astype(np.float32)
        std = noise_std(Tensor(logits), Tensor(np.array([st_], np.float32)), np.ones((1, n_a), bool)).data[0]
        worst = max(worst, abs(float(std.astype(np.float64).sum()) - st_ * n_a) / max(st_ * n_a, 1.0))
        np.testing.assert_allclose(std, noise_std_numpy(E, x, st_), rtol=1e-4, atol=1e-30)
        with precision("float64"):
            std64 = noise_std(Tensor((x @ E)[None]), Tensor(np.array([st_])), np.ones((1, n_a), bool)).data
        assert (std64 > 0).all()
    assert worst <= 1e-6


def test_noise_symmetric_logits():
    std = noise_std(Tensor(np.zeros((1, 2))), Tensor(np.array([0.3])), np.ones((1, 2), bool)).data
    np.testing.assert_allclose(std, [[0.3, 0.3]], rtol=1e-6)


def test_policy_std_sums_to_sigma_times_na():
    policy, sids, aids = small_policy(seed=10)
    policy.log_std_net.weight.data[:] = np.random.default_rng(1).normal(size=policy.log_std_net.weight.shape)
    policy.reset_sigma(1e-3)
    assert policy.sigma_tilde == pytest.approx(1e-3)
    b = random_batch(np.random.default_rng(8), sids, aids, b=16)
    _, s, _ = _outputs(policy, b)
    sums = (s * b.actuator_mask).sum(1)
    np.testing.assert_allclose(sums, 1e-3 * b.actuator_mask.sum(1), rtol=1e-5)


def test_sample_std_monte_carlo():
    mean = Tensor(np.zeros((100_000, 3)))
    sigma = np.array([0.2, 1.0, 3.0])
    dist = ActionDistribution(mean, Tensor(np.broadcast_to(sigma, (100_000, 3)).copy()), np.ones((100_000, 3), bool))
    u = dist.sample(np.random.default_rng(9))
    np.testing.assert_allclose(u.std(axis=0), sigma, rtol=0.02)


def test_sample_zero_std_is_mean():
    m = np.array([[0.3, -1.2]])
    dist = ActionDistribution(Tensor(m), Tensor(np.full((1, 2), 1e-12)), np.ones((1, 2), bool))
    np.testing.assert_allclose(dist.sample(np.random.default_rng(0)), m, atol=1e-10)
    assert np.all((squash(dist.sample(np.random.default_rng(0))) >= 0) & (squash(m) <= 1))


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(0.05, 3), st.floats(-1, 1).filter(lambda v: abs(v) > 1e-3))
def test_log_prob_maximized_at_mean(mu, sd, delta):
    m, s, mask = np.array([[mu]]), np.array([[sd]]), np.ones((1, 1), bool)
    assert log_prob_numpy(m, s, m, mask)[0] > log_prob_numpy(m, s, m + delta, mask)[0]
    dist = ActionDistribution(Tensor(m, dtype=np.float64), Tensor(s, dtype=np.float64), mask)
    assert dist.log_prob(m).data[0] == pytest.approx(-math.log(sd) - 0.5 * math.log(2 * math.pi))


def test_squash_roundtrip():
    a = np.linspace(0.01, 0.99, 9)
    np.testing.assert_allclose(squash(unsquash(a)), a, rtol=1e-9)


# -- MLP baseline ---------------------------------------------------------------------

def test_mlp_task_embedding_and_padding():
    spec = MLPSpec(max_channels=8, max_actuators=4, n_tasks=3, hidden=16)
    model = MLPPolicy(spec, seed=1)
    vals = np.random.default_rng(2).normal(size=(2, 5, 5)).astype(np.float32)
    mask = np.ones((2, 5), bool)
    mask[1, 3:] = False
    b = TokenBatch(vals, np.zeros((2, 5), np.int64), mask, np.zeros((2, 3), np.int64), np.ones((2, 3), bool),
                   np.array([0, 2]))
    flat = model.flatten(b).reshape(2, 8, 5)
    assert np.all(flat[:, 5:] == 0) and np.all(flat[1, 3:] == 0)
    out0 = model.act(b).dist.mean.data
    b2 = TokenBatch(vals, b.sensor_ids, mask, b.actuator_ids, b.actuator_mask, np.array([1, 2]))
    out1 = model.act(b2).dist.mean.data
    assert np.abs(out0[0] - out1[0]).max() > 0
    np.testing.assert_array_equal(out0[1], out1[1])
    assert out0.shape == (2, 3)
    with pytest.raises(TooManyChannelsError):
        model.flatten(TokenBatch(np.zeros((1, 9, 5)), np.zeros((1, 9), np.int64), np.ones((1, 9), bool),
                                 np.zeros((1, 1), np.int64), np.ones((1, 1), bool), np.zeros(1, np.int64)))
