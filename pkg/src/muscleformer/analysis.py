"""Muscle-synergy analysis: PCA bases, control-subspace inactivation, EV, PVD, PAD.

Activations are analysed in their raw [0, 1] units (no per-muscle
standardization). Projected actions are clipped back into [0, 1] so they
remain valid muscle commands.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .sim.tasks import TaskSpec

Z95 = 1.959963984540054


@dataclass
class ActivationDataset:
    """Rows of muscle activations with the task that produced each row."""

    X: np.ndarray                   # (T, N_A)
    tasks: np.ndarray               # (T,) task names
    source: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.tasks = np.asarray(self.tasks)
        if self.X.ndim != 2 or len(self.tasks) != len(self.X):
            raise ValueError("activation matrix must be (T, N_A) with one task label per row")
        if self.X.size and (self.X.min() < 0 or self.X.max() > 1):
            raise ValueError("activations must lie in [0, 1]")

    @property
    def n_actuators(self) -> int:
        return self.X.shape[1]

    def select(self, task: str) -> "ActivationDataset":
        keep = self.tasks == task
        return ActivationDataset(self.X[keep], self.tasks[keep], self.source)

    def select_many(self, tasks) -> "ActivationDataset":
        keep = np.isin(self.tasks, list(tasks))
        return ActivationDataset(self.X[keep], self.tasks[keep], self.source)

    @classmethod
    def concat(cls, parts) -> "ActivationDataset":
        parts = list(parts)
        return cls(np.concatenate([p.X for p in parts]), np.concatenate([p.tasks for p in parts]),
                   "+".join(sorted({p.source for p in parts})))


@dataclass
class PCABasis:
    mean: np.ndarray                # (N_A,)
    components: np.ndarray          # (N_A, N_A), column i is the i-th component
    eigenvalues: np.ndarray         # (N_A,) non-increasing
    rank_deficient: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.mean)

    def top(self, k: int) -> np.ndarray:
        _check_k(k, self.dim)
        return self.components[:, :k]


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")


def sign_convention(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so that its largest-magnitude entry is positive."""
    v = np.array(vectors, dtype=np.float64)
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def fit_pca(data, rank_tol: float = 1e-12) -> PCABasis:
    """PCA of the sample covariance (``ddof=1``) of centred activations."""
    X = data.X if isinstance(data, ActivationDataset) else np.asarray(data, dtype=np.float64)
    t, n = X.shape
    if t <= n:
        raise ValueError(f"PCA needs more samples than dimensions (got {t} x {n})")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(n, n)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = sign_convention(evecs[:, order])
    scale = max(float(evals[0]), 1.0e-300)
    deficient = bool((evals <= rank_tol * scale).any())
    return PCABasis(mean, evecs, evals, deficient)


def project_raw(action: np.ndarray, basis: PCABasis, k: int) -> np.ndarray:
    p = basis.top(k)
    a = np.asarray(action, dtype=np.float64)
    return basis.mean + (a - basis.mean) @ p @ p.T


def project_action(action: np.ndarray, basis: PCABasis, k: int) -> np.ndarray:
    """``clip(mu + P_k P_k^T (a - mu), 0, 1)``."""
    return np.clip(project_raw(action, basis, k), 0.0, 1.0)


def explained_variance(basis: PCABasis, k: int) -> float:
    _check_k(k, basis.dim)
    total = basis.eigenvalues.sum()
    if total <= 0:
        return 1.0
    return float(basis.eigenvalues[:k].sum() / total)


def captured_variance(cov: np.ndarray, p_k: np.ndarray) -> float:
    return float(np.trace(p_k.T @ cov @ p_k))


def pvd(basis_a: PCABasis, data_b, k: int) -> float:
    """Variance of ``data_b`` lost by using A's top-k subspace instead of B's own, as a fraction."""
    X = data_b.X if isinstance(data_b, ActivationDataset) else np.asarray(data_b, dtype=np.float64)
    if X.shape[1] != basis_a.dim:
        raise ValueError(f"dimension mismatch: basis {basis_a.dim} vs data {X.shape[1]}")
    basis_b = fit_pca(X)
    cov = np.cov(X, rowvar=False, ddof=1)
    total = float(np.trace(cov))
    if total <= 0:
        return 0.0
    return (captured_variance(cov, basis_b.top(k)) - captured_variance(cov, basis_a.top(k))) / total


def principal_angles(p_a: np.ndarray, p_b: np.ndarray) -> np.ndarray:
    """Principal angles in degrees between the column spans (orthonormal inputs), ascending.

    Cosines come from the singular values of ``P_a^T P_b``; angles below 45
    degrees use the sines from the residual ``P_b - P_a P_a^T P_b``, where
    arccos loses precision.
    """
    cos = np.clip(np.linalg.svd(p_a.T @ p_b, compute_uv=False), 0.0, 1.0)
    sin = np.clip(np.linalg.svd(p_b - p_a @ (p_a.T @ p_b), compute_uv=False)[::-1], 0.0, 1.0)
    ang = np.where(cos ** 2 > 0.5, np.arcsin(sin), np.arccos(cos))
    return np.degrees(ang)


def pad(basis_a: PCABasis, basis_b: PCABasis, k: int, return_angles: bool = False):
    """Mean principal angle (degrees) between the two top-k subspaces."""
    if basis_a.dim != basis_b.dim:
        raise ValueError(f"dimension mismatch: {basis_a.dim} vs {basis_b.dim}")
    ang = principal_angles(basis_a.top(k), basis_b.top(k))
    return (float(ang.mean()), ang) if return_angles else float(ang.mean())


def random_basis(n: int, rng: np.random.Generator, mean: np.ndarray | None = None) -> PCABasis:
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return PCABasis(np.zeros(n) if mean is None else np.asarray(mean, float), q, np.ones(n))


# -- control subspace inactivation -------------------------------------------

@dataclass
class CurvePoint:
    k: int
    value: float
    ci_low: float
    ci_high: float


def csi_sweep(run, n_actuators: int, basis: PCABasis, episodes: int, baseline: float | None = None) -> list[CurvePoint]:
    """Relative solved fraction for every k in ``1..n_actuators``.

    ``run(transform)`` evaluates the controller on a fixed set of episode
    seeds and returns an :class:`EvalResult`; ``transform=None`` is the
    unprojected baseline. The interval is the normal-approximation 95%
    interval of the projected solved fraction, divided by the baseline.
    """
    if basis.dim != n_actuators:
        raise ValueError(f"basis dimension {basis.dim} does not match the task's {n_actuators} actuators")
    if baseline is None:
        baseline = run(None).solved_fraction
    points = []
    for k in range(1, n_actuators + 1):
        p = run(lambda a, k=k: project_action(a, basis, k)).solved_fraction
        half = Z95 * np.sqrt(p * (1 - p) / episodes)
        if baseline > 0:
            points.append(CurvePoint(k, p / baseline, (p - half) / baseline, (p + half) / baseline))
        else:
            points.append(CurvePoint(k, float("nan"), float("nan"), float("nan")))
    return points


def csi_curve(policy, standardizer, task: TaskSpec, basis: PCABasis, episodes: int = 100, seed: int = 0,
              disjoint: bool = False, baseline=None) -> list[CurvePoint]:
    """CSI curve of a policy; the same episode seeds serve every k and the baseline."""
    from .trainer.evaluate import evaluate_policy

    def run(transform):
        return evaluate_policy(policy, standardizer, task, episodes, seed, disjoint, transform=transform)

    return csi_sweep(run, task.action_dim, basis, episodes, baseline)


def k_at_threshold(points: list[CurvePoint], threshold: float = 0.9) -> int | None:
    """Smallest k whose relative performance reaches ``threshold``."""
    for p in points:
        if p.value >= threshold:
            return p.k
    return None


def ev_curve(basis: PCABasis) -> list[CurvePoint]:
    return [CurvePoint(k, explained_variance(basis, k), float("nan"), float("nan")) for k in range(1, basis.dim + 1)]


# -- CSV input / output --------------------------------------------------------

def _f(x: float) -> str:
    return "" if not np.isfinite(x) else f"{x:.9g}"


def write_curve_csv(path, points: list[CurvePoint]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["k", "value", "ci_low", "ci_high"])
        for p in points:
            w.writerow([p.k, _f(p.value), _f(p.ci_low), _f(p.ci_high)])


def write_activations_csv(path, activations: dict[str, np.ndarray]) -> None:
    """``activations`` maps task -> (steps, episodes, N_A) array."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        n_a = max(a.shape[-1] for a in activations.values())
        w.writerow(["task", "episode", "step"] + [f"a{i}" for i in range(n_a)])
        for task, a in activations.items():
            steps, eps, n = a.shape
            for e in range(eps):
                for s in range(steps):
                    w.writerow([task, e, s] + [f"{x:.9g}" for x in a[s, e]] + [""] * (n_a - n))


def read_activations_csv(path, tasks=None) -> ActivationDataset:
    rows, labels = [], []
    with open(path, newline="") as f:
        r = csv.reader(f)
        next(r)
        for row in r:
            if tasks is not None and row[0] not in tasks:
                continue
            vals = [float(x) for x in row[3:] if x != ""]
            rows.append(vals)
            labels.append(row[0])
    widths = {len(v) for v in rows}
    if len(widths) > 1:
        raise ValueError(f"{path}: mixed actuator counts {sorted(widths)}; select tasks of one embodiment")
    return ActivationDataset(np.array(rows), np.array(labels), str(path))
