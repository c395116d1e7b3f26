"""Encoder-decoder muscle transformer policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, no_grad
from ..autodiff import ops
from ..vocab import VALUE_SIGNATURE, EmbeddingTable, SignatureRegistry, Vocabulary
from .distribution import ActionDistribution, noise_std
from .layers import Decoder, Encoder, Linear, Module
from .spec import PolicySpec
from .tokens import TokenBatch, TooManyChannelsError


@dataclass
class PolicyOutput:
    dist: ActionDistribution
    value: Tensor                 # (B,)
    actuator_embeddings: Tensor   # (B, A, d) action-decoder outputs
    sigma_tilde: Tensor


def _one_hot(ids: np.ndarray, n: int, dtype) -> np.ndarray:
    flat = ids.reshape(-1)
    out = np.zeros((flat.size, n), dtype=dtype)
    out[np.arange(flat.size), flat] = 1.0
    return out.reshape(ids.shape + (n,))


class MuscleTransformer(Module):
    """Sensor tokens -> encoder; actuator and value tokens -> two decoders.

    A sensor token is ``tokenizer(history window) + role embedding``; the
    role embedding is the summed vocabulary rows of the channel's signature.
    No positional index is used, so outputs are equivariant to token order.
    """

    kind = "transformer"

    def __init__(self, spec: PolicySpec, vocab: Vocabulary, registry: SignatureRegistry | None = None, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.spec = spec
        d = spec.embedding_dim
        self._vocab = vocab
        vocab.register(VALUE_SIGNATURE.words[0])
        self._registry = registry or SignatureRegistry(vocab)
        self._value_sig_id = self._registry.register(VALUE_SIGNATURE)
        self.table = EmbeddingTable(vocab, d, rng, init_std=spec.embedding_init_std)
        self.tokenizer = Linear(spec.tokenizer_inputs, d, rng, name="tokenizer")
        self.tokenizer.bias.data[:] = 0.0
        eps = spec.layer_norm_eps
        self.encoder = Encoder(d, spec.feedforward_dim, spec.heads, spec.encoder_layers, eps, rng, "encoder")
        self.action_decoder = Decoder(d, spec.feedforward_dim, spec.heads, spec.decoder_layers, eps, rng, "action_decoder")
        self.value_decoder = Decoder(d, spec.feedforward_dim, spec.heads, spec.decoder_layers, eps, rng, "value_decoder")
        self.action_net = Linear(d, 1, rng, name="action_net")
        self.value_net = Linear(d, 1, rng, name="value_net")
        self.log_std_net = Linear(d, 1, rng, name="log_std_net")
        self.log_std_net.weight.data[:] = 0.0
        self.log_sigma = Tensor(np.array([np.log(spec.init_sigma)]), requires_grad=True, name="log_sigma")

    # -- vocabulary plumbing -------------------------------------------
    @property
    def vocab(self) -> Vocabulary:
        return self._vocab

    @property
    def registry(self) -> SignatureRegistry:
        return self._registry

    def register_signature(self, signature) -> int:
        idx = self._registry.register(signature)
        self.table.sync()
        return idx

    def parameters(self) -> dict[str, Tensor]:
        params = self.named_parameters()
        # the table may be re-allocated when the vocabulary grows
        params["table.weight"] = self.table.weight
        return params

    @property
    def sigma_tilde(self) -> float:
        return float(np.exp(self.log_sigma.data[0]))

    def reset_sigma(self, value: float) -> None:
        self.log_sigma.data[:] = np.log(value)

    # -- forward --------------------------------------------------------
    def role_embeddings(self) -> Tensor:
        """(num_signatures, d) summed word embeddings."""
        m = self._registry.matrix(self.table.weight.dtype)
        return ops.matmul(Tensor(m, dtype=m.dtype), self.table.weight)

    def sensor_tokens(self, batch: TokenBatch, roles: Tensor) -> Tensor:
        spec = self.spec
        if batch.values.shape[1] > spec.max_sensor_tokens:
            raise TooManyChannelsError(
                f"{batch.values.shape[1]} sensor tokens exceed the configured maximum {spec.max_sensor_tokens}"
            )
        dt = self.table.weight.dtype
        values = batch.values.astype(dt, copy=False)
        if spec.tokenizer_extra_feature:
            values = np.concatenate([values, np.ones(values.shape[:2] + (1,), dtype=dt)], axis=-1)
        enc = self.tokenizer(Tensor(values, dtype=dt))
        onehot = _one_hot(batch.sensor_ids, roles.shape[0], dt)
        tok = ops.add(enc, ops.matmul(Tensor(onehot, dtype=dt), roles))
        return ops.mul(tok, batch.sensor_mask[..., None].astype(dt))

    def encode(self, batch: TokenBatch, roles: Tensor | None = None) -> Tensor:
        roles = self.role_embeddings() if roles is None else roles
        return self.encoder(self.sensor_tokens(batch, roles), batch.sensor_mask)

    def decode_actions(self, memory: Tensor, batch: TokenBatch, roles: Tensor) -> Tensor:
        if batch.actuator_ids.shape[1] > self.spec.max_actuators:
            raise TooManyChannelsError(f"{batch.actuator_ids.shape[1]} actuators exceed the configured maximum")
        dt = self.table.weight.dtype
        onehot = _one_hot(batch.actuator_ids, roles.shape[0], dt)
        act = ops.mul(ops.matmul(Tensor(onehot, dtype=dt), roles), batch.actuator_mask[..., None].astype(dt))
        return self.action_decoder(act, batch.actuator_mask, memory, batch.sensor_mask)

    def decode_value(self, memory: Tensor, batch: TokenBatch, roles: Tensor) -> Tensor:
        b = memory.shape[0]
        token = ops.add(Tensor(np.zeros((b, 1, 1), dtype=roles.dtype)), roles[self._value_sig_id][None, None, :])
        out = self.value_decoder(token, np.ones((b, 1), dtype=bool), memory, batch.sensor_mask)
        return ops.reshape(self.value_net(out), (b,))

    def __call__(self, batch: TokenBatch) -> PolicyOutput:
        roles = self.role_embeddings()
        memory = self.encode(batch, roles)
        E = self.decode_actions(memory, batch, roles)
        b, a, _ = E.shape
        mean = ops.reshape(self.action_net(E), (b, a))
        mean = ops.mul(mean, batch.actuator_mask.astype(mean.dtype))
        logits = ops.reshape(self.log_std_net(E), (b, a))
        sigma = ops.exp(self.log_sigma)
        std = noise_std(logits, sigma, batch.actuator_mask)
        value = self.decode_value(memory, batch, roles)
        return PolicyOutput(ActionDistribution(mean, std, batch.actuator_mask), value, E, sigma)

    def act(self, batch: TokenBatch) -> PolicyOutput:
        with no_grad():
            return self(batch)
