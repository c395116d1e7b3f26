"""Differentiable primitives.

Each function computes its forward value with numpy and, when taping is on,
registers a closure returning the vector-Jacobian product for each input.
Broadcasting is supported for the elementwise binary ops by summing the
incoming gradient back to each operand's shape.
"""

from __future__ import annotations

import builtins
import math

import numpy as np

from .tensor import Tensor, as_tensor, record

_LOG_2PI = math.log(2.0 * math.pi)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise binary ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a.data, b.data)
    out = Tensor(a.data + b.data, dtype=np.result_type(a.data, b.data))
    sa, sb = a.shape, b.shape
    return record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a.data, b.data)
    out = Tensor(a.data - b.data, dtype=np.result_type(a.data, b.data))
    sa, sb = a.shape, b.shape
    return record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    if not isinstance(b, (Tensor, np.ndarray)) and np.isscalar(b):
        return scale(as_tensor(a), float(b))
    if not isinstance(a, (Tensor, np.ndarray)) and np.isscalar(a):
        return scale(as_tensor(b), float(a))
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a.data, b.data)
    ad, bd = a.data, b.data
    out = Tensor(ad * bd, dtype=np.result_type(ad, bd))
    return record(out, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    if not isinstance(b, (Tensor, np.ndarray)) and np.isscalar(b):
        return scale(as_tensor(a), 1.0 / float(b))
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a.data, b.data)
    ad, bd = a.data, b.data
    out = Tensor(ad / bd, dtype=np.result_type(ad, bd))

    def vjp(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * ad / (bd * bd), bd.shape)

    return record(out, (a, b), vjp)


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("minimum", a.data, b.data)
    pick_a = a.data <= b.data
    out = Tensor(np.where(pick_a, a.data, b.data), dtype=np.result_type(a.data, b.data))
    sa, sb = a.shape, b.shape
    return record(out, (a, b), lambda g: (_unbroadcast(g * pick_a, sa), _unbroadcast(g * ~pick_a, sb)))


def maximum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("maximum", a.data, b.data)
    pick_a = a.data >= b.data
    out = Tensor(np.where(pick_a, a.data, b.data), dtype=np.result_type(a.data, b.data))
    sa, sb = a.shape, b.shape
    return record(out, (a, b), lambda g: (_unbroadcast(g * pick_a, sa), _unbroadcast(g * ~pick_a, sb)))


def where(cond: np.ndarray, a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    out = Tensor(np.where(cond, a.data, b.data), dtype=np.result_type(a.data, b.data))
    sa, sb = a.shape, b.shape
    return record(out, (a, b), lambda g: (_unbroadcast(g * cond, sa), _unbroadcast(g * ~cond, sb)))


# -- elementwise unary ----------------------------------------------------

def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * c, dtype=a.dtype)
    return record(out, (a,), lambda g: (g * c,))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    out = Tensor(ad ** p, dtype=a.dtype)
    return record(out, (a,), lambda g: (g * p * ad ** (p - 1),))


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    out = Tensor(ad * ad, dtype=a.dtype)
    return record(out, (a,), lambda g: (2.0 * g * ad,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    y = np.sqrt(a.data)
    out = Tensor(y, dtype=a.dtype)
    return record(out, (a,), lambda g: (0.5 * g / y,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    out = Tensor(a.data * mask, dtype=a.dtype)
    return record(out, (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    out = Tensor(s, dtype=a.dtype)
    return record(out, (a,), lambda g: (g * s * (1.0 - s),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    out = Tensor(y, dtype=a.dtype)
    return record(out, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    out = Tensor(y, dtype=a.dtype)
    return record(out, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    out = Tensor(np.log(ad), dtype=a.dtype)
    return record(out, (a,), lambda g: (g / ad,))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    out = Tensor(np.clip(a.data, lo, hi), dtype=a.dtype)
    return record(out, (a,), lambda g: (g * inside,))


def masked_fill(a, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is true by a constant."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    _check_broadcast("masked_fill", a.data, mask)
    out = Tensor(np.where(mask, np.asarray(value, dtype=a.dtype), a.data), dtype=a.dtype)
    keep = ~mask
    sa = a.shape
    return record(out, (a,), lambda g: (_unbroadcast(g * keep, sa),))


# -- reductions and normalizations ----------------------------------------

def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), dtype=a.dtype)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return record(out, (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s, dtype=a.dtype)
    return record(out, (a,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def layer_norm(a, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis (no affine part)."""
    a = as_tensor(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat, dtype=a.dtype)

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return record(out, (a,), vjp)


def mse(a, b, mask: np.ndarray | None = None) -> Tensor:
    """Mean squared error, optionally averaged over ``mask`` entries only."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    d = a.data - b.data
    if mask is None:
        w = None
        n = d.size
    else:
        w = np.asarray(mask, dtype=a.dtype)
        n = builtins.max(float(w.sum()), 1.0)
    sq = d * d if w is None else d * d * w
    out = Tensor(np.asarray(sq.sum() / n), dtype=a.dtype)

    def vjp(g):
        gd = (2.0 / n) * g * (d if w is None else d * w)
        return gd, -gd

    return record(out, (a, b), vjp)


def gaussian_log_prob(x, mean_, std) -> Tensor:
    """Elementwise log-density of N(mean, std^2) at x."""
    x, mean_, std = as_tensor(x), as_tensor(mean_), as_tensor(std)
    z = (x.data - mean_.data) / std.data
    val = -0.5 * z * z - np.log(std.data) - 0.5 * _LOG_2PI
    out = Tensor(val, dtype=np.result_type(x.data, mean_.data, std.data))
    sx, sm, ss = x.shape, mean_.shape, std.shape
    sd = std.data

    def vjp(g):
        gz = -g * z / sd
        gs = g * (z * z - 1.0) / sd
        return _unbroadcast(gz, sx), _unbroadcast(-gz, sm), _unbroadcast(gs, ss)

    return record(out, (x, mean_, std), vjp)


# -- linear algebra and shape ---------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd, dtype=np.result_type(ad, bd))

    def vjp(g):
        if bd.ndim == 2 and ad.ndim > 2:
            ga = g @ bd.T
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return record(out, (a, b), vjp)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    out = Tensor(a.data.reshape(shape), dtype=a.dtype)
    return record(out, (a,), lambda g: (g.reshape(src),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    out = Tensor(a.data.transpose(axes), dtype=a.dtype)
    return record(out, (a,), lambda g: (g.transpose(inv),))


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.swapaxes(a.data, ax1, ax2), dtype=a.dtype)
    return record(out, (a,), lambda g: (np.swapaxes(g, ax1, ax2),))


def slice(a, index) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = Tensor(a.data[index], dtype=a.dtype)
    shape, dt = a.shape, a.dtype

    basic = _is_basic_index(index)

    def vjp(g):
        full = np.zeros(shape, dtype=dt)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return record(out, (a,), vjp)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, builtins.slice)) or i is None or i is Ellipsis for i in items)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    ref = ts[0].shape
    ax = axis % len(ref)
    for t in ts[1:]:
        if len(t.shape) != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ValueError(f"concat: incompatible shapes {ref} and {t.shape} along axis {axis}")
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis), dtype=np.result_type(*[t.data for t in ts]))
    cuts = np.cumsum([t.shape[ax] for t in ts])[:-1]
    return record(out, tuple(ts), lambda g: tuple(np.split(g, cuts, axis=ax)))
