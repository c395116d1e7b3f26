import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from muscleformer.analysis import (
    ActivationDataset,
    explained_variance,
    csi_sweep,
    ev_curve,
    fit_pca,
    k_at_threshold,
    pad,
    principal_angles,
    project_action,
    project_raw,
    pvd,
    random_basis,
    read_activations_csv,
    sign_convention,
    write_activations_csv,
    write_curve_csv,
    PCABasis,
)
from muscleformer.experts import analytic_expert
from muscleformer.sim import get_task
from muscleformer.trainer.evaluate import evaluate_expert


def jacobi_eigh(a, tol=1e-15, sweeps=100):
    """Cyclic Jacobi rotations for a symmetric matrix; returns (eigenvalues, eigenvectors)."""
    a = np.array(a, dtype=np.float64)
    n = len(a)
    v = np.eye(n)
    for _ in range(sweeps):
        off = np.sqrt((np.tril(a, -1) ** 2).sum())
        if off < tol * max(1.0, np.abs(a).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1)) if theta != 0 else 1.0
                c = 1 / np.sqrt(t * t + 1)
                s = t * c
                j = np.eye(n)
                j[p, p] = j[q, q] = c
                j[p, q], j[q, p] = s, -s
                a = j.T @ a @ j
                v = v @ j
    return np.diag(a).copy(), v


def _cov(X):
    X = np.asarray(X, float)
    c = X - X.mean(axis=0)
    return c.T @ c / (len(X) - 1)


def _random_activations(rng, t=200, n=6):
    mix = rng.normal(size=(n, n)) * rng.uniform(0.01, 1.0, size=n)
    z = rng.normal(size=(t, n)) @ mix.T
    return 1 / (1 + np.exp(-z))


# -- PCA -------------------------------------------------------------------------

def test_pca_matches_jacobi_on_100_instances():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 7))
        X = _random_activations(rng, int(rng.integers(n + 5, 120)), n)
        b = fit_pca(X)
        lam, vec = jacobi_eigh(_cov(X))
        order = np.argsort(lam)[::-1]
        lam, vec = np.clip(lam[order], 0, None), sign_convention(vec[:, order])
        np.testing.assert_allclose(b.eigenvalues, lam, atol=1e-8)
        gaps = np.abs(np.diff(lam)) > 1e-6
        for i in range(n):
            if (i == 0 or gaps[i - 1]) and (i == n - 1 or gaps[i]):
                np.testing.assert_allclose(b.components[:, i], vec[:, i], atol=1e-8)
        assert np.all(np.diff(b.eigenvalues) <= 1e-15)
        np.testing.assert_allclose(b.components.T @ b.components, np.eye(n), atol=1e-8)


def test_pca_one_dimensional_cloud():
    t = np.linspace(0.1, 0.9, 50)
    b = fit_pca(np.stack([t, t], axis=1))
    np.testing.assert_allclose(b.components[:, 0], [2 ** -0.5, 2 ** -0.5], atol=1e-12)
    assert b.rank_deficient and b.eigenvalues[1] == pytest.approx(0.0, abs=1e-15)


def test_pca_isotropic_eigenvalues_close():
    rng = np.random.default_rng(1)
    b = fit_pca(rng.uniform(0, 1, size=(20000, 4)))
    assert b.eigenvalues.max() / b.eigenvalues.min() < 1.1


def test_pca_needs_more_rows_than_columns():
    with pytest.raises(ValueError, match="more samples"):
        fit_pca(np.full((6, 6), 0.5))


def test_dataset_validation_and_select():
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        ActivationDataset(np.array([[1.5]]), ["x"])
    d = ActivationDataset(np.array([[0.1], [0.2], [0.3]]), ["a", "b", "a"], "p")
    assert d.select("a").X[:, 0].tolist() == [0.1, 0.3]
    both = ActivationDataset.concat([d.select("a"), d.select("b")])
    assert len(both.X) == 3 and both.source == "p"


# -- projection -----------------------------------------------------------------------

def _basis_11():
    v = np.array([[1, -1], [1, 1]]) / np.sqrt(2)
    return PCABasis(np.zeros(2), v, np.array([1.0, 0.0]))


def test_projection_hand_example():
    np.testing.assert_allclose(project_action(np.array([1.0, 0.0]), _basis_11(), 1), [0.5, 0.5])


def test_projection_full_rank_and_mean_fixed_point():
    rng = np.random.default_rng(2)
    b = fit_pca(_random_activations(rng))
    a = rng.uniform(0, 1, size=(10, 6))
    np.testing.assert_allclose(project_raw(a, b, 6), a, atol=1e-12)
    for k in range(1, 7):
        np.testing.assert_allclose(project_action(b.mean, b, k), b.mean, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_projection_idempotent(k, seed):
    rng = np.random.default_rng(seed)
    b = fit_pca(_random_activations(rng, 60))
    a = rng.uniform(0, 1, size=(4, 6))
    once = project_raw(a, b, k)
    np.testing.assert_allclose(project_raw(once, b, k), once, atol=1e-10)
    assert np.all((project_action(a, b, k) >= 0) & (project_action(a, b, k) <= 1))


def test_k_out_of_range():
    b = _basis_11()
    for k in (0, 3):
        with pytest.raises(ValueError, match="k must lie"):
            project_action(np.zeros(2), b, k)


# -- explained variance -------------------------------------------------------------

def test_explained_variance_curve():
    rng = np.random.default_rng(3)
    X = _random_activations(rng)
    b = fit_pca(X)
    ev = [p.value for p in ev_curve(b)]
    assert ev[-1] == pytest.approx(1.0)
    assert all(x <= y + 1e-15 for x, y in zip(ev, ev[1:]))
    lam = np.sort(jacobi_eigh(_cov(X))[0])[::-1]
    np.testing.assert_allclose(ev, np.cumsum(lam) / lam.sum(), atol=1e-10)
    assert explained_variance(b, 2) == pytest.approx(ev[1])


# -- PVD and PAD ---------------------------------------------------------------------

def test_pvd_self_zero_and_nonnegative():
    rng = np.random.default_rng(4)
    for _ in range(30):
        A, B = _random_activations(rng), _random_activations(rng)
        ba = fit_pca(A)
        for k in range(1, 7):
            assert pvd(fit_pca(B), B, k) == pytest.approx(0.0, abs=1e-12)
            assert pvd(ba, B, k) >= -1e-12
        assert pvd(ba, B, 6) == pytest.approx(0.0, abs=1e-12)


def test_pvd_dimension_mismatch():
    rng = np.random.default_rng(5)
    with pytest.raises(ValueError, match="dimension mismatch"):
        pvd(fit_pca(_random_activations(rng, n=2)), _random_activations(rng), 1)


def test_pad_examples():
    e = np.eye(2)
    b1 = PCABasis(np.zeros(2), e, np.ones(2))
    b2 = PCABasis(np.zeros(2), e[:, ::-1], np.ones(2))
    assert pad(b1, b1, 2) == pytest.approx(0.0, abs=1e-6)
    assert pad(b1, b2, 1) == pytest.approx(90.0)
    assert pad(b1, b2, 2) == pytest.approx(0.0, abs=1e-6)


def _pad_oracle(pa, pb):
    """Angles from Jacobi eigenvalues: squared cosines of P_a^T P_b, squared sines of its residual."""
    m = pa.T @ pb
    r = pb - pa @ m
    cos2 = np.sort(np.clip(jacobi_eigh(m.T @ m)[0], 0.0, 1.0))[::-1]
    sin2 = np.sort(np.clip(jacobi_eigh(r.T @ r)[0], 0.0, 1.0))
    ang = np.where(cos2 > 0.5, np.arcsin(np.sqrt(sin2)), np.arccos(np.sqrt(cos2)))
    return np.degrees(ang).mean()


def test_pad_matches_dense_oracle_on_100_pairs():
    rng = np.random.default_rng(6)
    for _ in range(100):
        k = int(rng.integers(1, 7))
        a, b = random_basis(6, rng), random_basis(6, rng)
        got = pad(a, b, k)
        assert got == pytest.approx(_pad_oracle(a.top(k), b.top(k)), abs=1e-6)
        assert got == pytest.approx(pad(b, a, k), abs=1e-9)
        assert 0.0 <= got <= 90.0


def test_principal_angles_sorted_and_full():
    rng = np.random.default_rng(7)
    a, b = random_basis(6, rng), random_basis(6, rng)
    mean, ang = pad(a, b, 3, return_angles=True)
    assert len(ang) == 3 and mean == pytest.approx(ang.mean())
    np.testing.assert_allclose(principal_angles(a.top(6), b.top(6)), 0.0, atol=1e-5)


# -- CSI -------------------------------------------------------------------------------

def test_csi_full_rank_is_identity_on_expert():
    task = get_task("ElbowPose")
    expert = analytic_expert(task)
    act = evaluate_expert(expert, task, 40, 0, record=True).activations
    basis = fit_pca(act.reshape(-1, 2))

    def run(transform):
        return evaluate_expert(expert, task, 40, 0, transform=transform)

    pts = csi_sweep(run, 2, basis, 40)
    assert [p.k for p in pts] == [1, 2]
    assert pts[-1].value == pytest.approx(1.0)
    assert pts[-1].ci_low <= 1.0 <= pts[-1].ci_high + 1e-12
    assert k_at_threshold(pts, 0.9) in (1, 2)
    with pytest.raises(ValueError, match="does not match"):
        csi_sweep(run, 6, basis, 40)


def test_k_at_threshold_none_when_never_reached():
    from muscleformer.analysis import CurvePoint
    assert k_at_threshold([CurvePoint(1, 0.2, 0, 0), CurvePoint(2, 0.5, 0, 0)]) is None


# -- CSV ------------------------------------------------------------------------------------

def test_activation_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    acts = {"ReachNear": rng.uniform(0, 1, (5, 3, 6)), "ElbowPose": rng.uniform(0, 1, (5, 2, 2))}
    path = tmp_path / "act.csv"
    write_activations_csv(path, acts)
    d = read_activations_csv(path, ["ReachNear"])
    assert d.X.shape == (15, 6)
    np.testing.assert_allclose(d.X[:3], acts["ReachNear"][:3, 0], atol=1e-8)
    with pytest.raises(ValueError, match="mixed actuator counts"):
        read_activations_csv(path)


def test_curve_csv(tmp_path):
    from muscleformer.analysis import CurvePoint
    path = tmp_path / "c.csv"
    write_curve_csv(path, [CurvePoint(1, 0.5, 0.25, 0.75), CurvePoint(2, float("nan"), float("nan"), float("nan"))])
    assert path.read_text() == "k,value,ci_low,ci_high\n1,0.5,0.25,0.75\n2,,,\n"
