"""Adam with global gradient-norm clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


def global_grad_norm(grads: list[np.ndarray]) -> float:
    total = 0.0
    for g in grads:
        total += float(np.sum(np.square(g, dtype=np.float64)))
    return float(np.sqrt(total))


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Scale ``grads`` so their joint L2 norm is at most ``max_norm``.

    Returns the (possibly scaled) gradients and the norm before clipping.
    """
    norm = global_grad_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    coef = max_norm / norm
    return [g * coef for g in grads], norm


@dataclass
class AdamState:
    lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """Adam over a named parameter dict.

    Gradients are read from ``param.grad``; parameters without a gradient are
    skipped for that step (their moments are left untouched).
    """

    def __init__(self, params: dict[str, Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.state = AdamState(lr=lr, betas=tuple(betas), eps=eps)
        for name, p in params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, max_grad_norm: float | None = None) -> float:
        """Apply one update; returns the pre-clipping global gradient norm."""
        names = [n for n, p in self.params.items() if p.grad is not None]
        grads = [self.params[n].grad for n in names]
        for n, g in zip(names, grads):
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in parameter {n!r}")
        grads, norm = clip_grad_norm(grads, max_grad_norm)
        st = self.state
        st.step += 1
        b1, b2 = st.betas
        c1 = 1.0 - b1 ** st.step
        c2 = 1.0 - b2 ** st.step
        for n, g in zip(names, grads):
            p = self.params[n]
            g = g.astype(p.data.dtype, copy=False)
            m = st.m[n]
            v = st.v[n]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= (st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)).astype(p.data.dtype, copy=False)
        return norm

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for n in self.params:
            out[f"adam.m.{n}"] = self.state.m[n]
            out[f"adam.v.{n}"] = self.state.v[n]
        return out


def adam_step(optimizer: Adam, max_grad_norm: float | None) -> float:
    return optimizer.step(max_grad_norm)
