"""Central finite-difference verification of taped gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, get_tape, no_grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    n_checked: int
    tolerance: float
    worst: tuple[str, tuple[int, ...]] | None = None

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    tolerance: float = 1e-4,
    n_samples: int | None = None,
    step: float = 1e-5,
    rng: np.random.Generator | None = None,
    floor: float = 1e-8,
) -> GradCheckReport:
    """Compare tape gradients of ``fn`` against central differences.

    ``fn`` must rebuild the scalar output from the current values of
    ``params``. With ``n_samples`` set, that many coordinates are drawn at
    random (uniformly over all parameter entries); otherwise every entry
    is checked.
    """
    for p in params:
        p.grad = None
    get_tape().clear()
    out = fn()
    backward(out)
    analytic = [np.zeros_like(p.data) if p.grad is None else np.array(p.grad) for p in params]

    coords: list[tuple[int, tuple[int, ...]]] = []
    sizes = np.array([p.size for p in params])
    if n_samples is None:
        for i, p in enumerate(params):
            coords.extend((i, idx) for idx in np.ndindex(p.shape))
    else:
        rng = rng or np.random.default_rng(0)
        flat = rng.choice(int(sizes.sum()), size=min(n_samples, int(sizes.sum())), replace=False)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        for f in np.sort(flat):
            i = int(np.searchsorted(offsets, f, side="right") - 1)
            coords.append((i, np.unravel_index(int(f - offsets[i]), params[i].shape)))

    worst_rel, worst_abs, worst = 0.0, 0.0, None
    with no_grad():
        for i, idx in coords:
            p = params[i]
            orig = p.data[idx].copy()
            p.data[idx] = orig + step
            f_plus = float(fn().data)
            p.data[idx] = orig - step
            f_minus = float(fn().data)
            p.data[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(analytic[i][idx])
            rel = relative_error(a, numeric, floor)
            worst_abs = max(worst_abs, abs(a - numeric))
            if rel > worst_rel:
                worst_rel = rel
                worst = (p.name or f"param{i}", tuple(int(j) for j in idx))
    for p in params:
        p.grad = None
    return GradCheckReport(worst_rel, worst_abs, len(coords), tolerance, worst)
