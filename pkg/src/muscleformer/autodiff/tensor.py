"""Tensor and tape for reverse-mode differentiation over numpy arrays.

Every primitive that touches a tensor with ``requires_grad`` appends one
record ``(output, inputs, vjp)`` to the active tape. ``backward`` replays the
records in reverse and accumulates vector-Jacobian products into the inputs.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np

VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Ordered record of executed primitives."""

    def __init__(self) -> None:
        self.records: list[tuple[Tensor, tuple[Tensor, ...], VJP]] = []

    def record(self, out: "Tensor", inputs: tuple["Tensor", ...], vjp: VJP) -> None:
        self.records.append((out, inputs, vjp))

    def clear(self) -> None:
        self.records.clear()

    def __len__(self) -> int:
        return len(self.records)


class _State:
    dtype: type = np.float32
    grad_enabled: bool = True
    debug: bool = False
    tape: Tape = Tape()


def get_tape() -> Tape:
    return _State.tape


def default_dtype() -> type:
    return _State.dtype


def set_default_dtype(dtype: str | type) -> None:
    _State.dtype = np.dtype(dtype).type


@contextlib.contextmanager
def precision(dtype: str | type) -> Iterator[None]:
    """Temporarily switch the dtype used for newly created tensors."""
    old = _State.dtype
    _State.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _State.dtype = old


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable taping; forward results carry no graph."""
    old = _State.grad_enabled
    _State.grad_enabled = False
    try:
        yield
    finally:
        _State.grad_enabled = old


@contextlib.contextmanager
def debug_mode(enabled: bool = True) -> Iterator[None]:
    """Check every forward result for NaN/Inf."""
    old = _State.debug
    _State.debug = enabled
    try:
        yield
    finally:
        _State.debug = old


def grad_enabled() -> bool:
    return _State.grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_leaf")

    __array_priority__ = 100.0

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        dtype=None,
    ) -> None:
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind in "fiu" and arr.dtype != _State.dtype:
            arr = arr.astype(_State.dtype)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._leaf = True

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag}{label})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operators (delegate to ops) -----------------------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __pow__(self, p: float):
        from . import ops
        return ops.power(self, p)

    def __getitem__(self, index):
        from . import ops
        return ops.slice(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(out: Tensor, inputs: tuple[Tensor, ...], vjp: VJP) -> Tensor:
    """Attach ``out`` to the active tape if any input needs a gradient."""
    if _State.debug and out.data.dtype.kind == "f" and not np.all(np.isfinite(out.data)):
        raise FloatingPointError(f"non-finite value produced (shape {out.shape})")
    if _State.grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._leaf = False
        _State.tape.record(out, inputs, vjp)
    return out


def backward(loss: Tensor, tape: Tape | None = None) -> dict[Tensor, np.ndarray]:
    """Back-propagate from a scalar ``loss``.

    Returns the gradient map of every leaf reached. Leaf gradients accumulate
    across calls until cleared; intermediate gradients are released and the
    tape is emptied.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = _State.tape if tape is None else tape
    if not loss.requires_grad:
        tape.clear()
        return {}
    loss.grad = np.ones_like(loss.data)
    leaves: dict[Tensor, np.ndarray] = {}
    for out, inputs, vjp in reversed(tape.records):
        g = out.grad
        if g is None:
            continue
        grads = vjp(g)
        for t, gi in zip(inputs, grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.data.shape:
                gi = np.broadcast_to(gi, t.data.shape)
            t.grad = gi if t.grad is None else t.grad + gi
            if t._leaf:
                leaves[t] = t.grad
        out.grad = None
    tape.clear()
    for t in leaves:
        if not t.grad.flags.owndata or not t.grad.flags.writeable:
            t.grad = np.array(t.grad)
        leaves[t] = t.grad
    return leaves
