"""Transformer layers composed from autodiff primitives.

Attention is built from matmul, masked_fill and softmax rather than fused so
that masking can be tested on its own. All blocks are pre-norm.
"""

from __future__ import annotations

import math

import numpy as np

from ..autodiff import Tensor
from ..autodiff import ops

MASK_FILL = -1e9


class Module:
    """Container that discovers parameters from its attributes."""

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[path] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(path + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{path}.{i}."))
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())


def _param(data: np.ndarray, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True, name: str = "linear"):
        bound = 1.0 / math.sqrt(n_in)
        self.weight = _param(rng.uniform(-bound, bound, size=(n_in, n_out)), f"{name}.weight")
        self.bias = _param(np.zeros(n_out), f"{name}.bias") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        return y if self.bias is None else ops.add(y, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, bias: bool = True, name: str = "norm"):
        self.eps = eps
        self.weight = _param(np.ones(dim), f"{name}.weight")
        self.bias = _param(np.zeros(dim), f"{name}.bias") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.mul(ops.layer_norm(x, self.eps), self.weight)
        return y if self.bias is None else ops.add(y, self.bias)


class MultiheadAttention(Module):
    """Scaled dot-product attention with a packed q/k/v projection."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, name: str = "attn"):
        if dim % heads:
            raise ValueError(f"embedding dim {dim} is not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        bound = math.sqrt(6.0 / (dim + 3 * dim))
        self.in_weight = _param(rng.uniform(-bound, bound, size=(dim, 3 * dim)), f"{name}.in_weight")
        self.in_bias = _param(np.zeros(3 * dim), f"{name}.in_bias")
        self.out = Linear(dim, dim, rng, name=f"{name}.out")

    def _split(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return ops.transpose(ops.reshape(x, (b, t, self.heads, self.dim // self.heads)), (0, 2, 1, 3))

    def __call__(self, query: Tensor, memory: Tensor | None, key_mask: np.ndarray) -> Tensor:
        """``key_mask`` is a (batch, keys) boolean array of valid positions."""
        d = self.dim
        if memory is None:
            qkv = ops.add(ops.matmul(query, self.in_weight), self.in_bias)
            q, k, v = qkv[..., :d], qkv[..., d : 2 * d], qkv[..., 2 * d :]
        else:
            q = ops.add(ops.matmul(query, self.in_weight[:, :d]), self.in_bias[:d])
            kv = ops.add(ops.matmul(memory, self.in_weight[:, d:]), self.in_bias[d:])
            k, v = kv[..., :d], kv[..., d:]
        qh, kh, vh = self._split(q), self._split(k), self._split(v)
        scores = ops.scale(ops.matmul(qh, ops.swapaxes(kh, -1, -2)), 1.0 / math.sqrt(d // self.heads))
        scores = ops.masked_fill(scores, ~key_mask[:, None, None, :], MASK_FILL)
        weights = ops.softmax(scores, axis=-1)
        ctx = ops.matmul(weights, vh)
        b, _, t, _ = ctx.shape
        ctx = ops.reshape(ops.transpose(ctx, (0, 2, 1, 3)), (b, t, d))
        return self.out(ctx)


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator, name: str = "ff"):
        self.fc1 = Linear(dim, hidden, rng, name=f"{name}.fc1")
        self.fc2 = Linear(hidden, dim, rng, name=f"{name}.fc2")

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ops.relu(self.fc1(x)))


class EncoderLayer(Module):
    def __init__(self, dim: int, hidden: int, heads: int, eps: float, rng: np.random.Generator, name: str):
        self.norm1 = LayerNorm(dim, eps, name=f"{name}.norm1")
        self.attn = MultiheadAttention(dim, heads, rng, name=f"{name}.attn")
        self.norm2 = LayerNorm(dim, eps, name=f"{name}.norm2")
        self.ff = FeedForward(dim, hidden, rng, name=f"{name}.ff")

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        x = ops.add(x, self.attn(self.norm1(x), None, mask))
        return ops.add(x, self.ff(self.norm2(x)))


class DecoderLayer(Module):
    def __init__(self, dim: int, hidden: int, heads: int, eps: float, rng: np.random.Generator, name: str):
        self.norm1 = LayerNorm(dim, eps, name=f"{name}.norm1")
        self.self_attn = MultiheadAttention(dim, heads, rng, name=f"{name}.self_attn")
        self.norm2 = LayerNorm(dim, eps, name=f"{name}.norm2")
        self.cross_attn = MultiheadAttention(dim, heads, rng, name=f"{name}.cross_attn")
        self.norm3 = LayerNorm(dim, eps, name=f"{name}.norm3")
        self.ff = FeedForward(dim, hidden, rng, name=f"{name}.ff")

    def __call__(self, x: Tensor, x_mask: np.ndarray, memory: Tensor, memory_mask: np.ndarray) -> Tensor:
        x = ops.add(x, self.self_attn(self.norm1(x), None, x_mask))
        x = ops.add(x, self.cross_attn(self.norm2(x), memory, memory_mask))
        return ops.add(x, self.ff(self.norm3(x)))


class Encoder(Module):
    """Stack of encoder layers followed by a final LayerNorm."""

    def __init__(self, dim, hidden, heads, n_layers, eps, rng, name="encoder"):
        self.layers = [EncoderLayer(dim, hidden, heads, eps, rng, f"{name}.{i}") for i in range(n_layers)]
        self.norm = LayerNorm(dim, eps, name=f"{name}.norm")

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        for layer in self.layers:
            x = layer(x, mask)
        return self.norm(x)


class Decoder(Module):
    """Stack of decoder layers followed by a scale-only LayerNorm."""

    def __init__(self, dim, hidden, heads, n_layers, eps, rng, name="decoder"):
        self.layers = [DecoderLayer(dim, hidden, heads, eps, rng, f"{name}.{i}") for i in range(n_layers)]
        self.norm = LayerNorm(dim, eps, bias=False, name=f"{name}.norm")

    def __call__(self, x: Tensor, x_mask: np.ndarray, memory: Tensor, memory_mask: np.ndarray) -> Tensor:
        for layer in self.layers:
            x = layer(x, x_mask, memory, memory_mask)
        return self.norm(x)
