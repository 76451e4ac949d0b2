import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from htpca.errors import ConfigError, NumericalError
from htpca.pca import (
    PcaModel,
    cosine_similarity,
    fit_pca,
    log_cost,
    project_reconstruct,
    random_orthonormal,
    residual_norms_sq,
    subspace_cosine,
    sym_eigen,
)
from htpca.sampling import GaussianSpec, RngSeed, Subordinator, sample_superstatistical


def sym(d, seed):
    b = np.random.default_rng(seed).standard_normal((d, d))
    return (b + b.T) / 2


def test_diagonal():
    lam, vec = sym_eigen(np.diag([1.0, 4.0]))
    assert np.allclose(lam, [4, 1]) and np.allclose(np.abs(vec), [[0, 1], [1, 0]])


def test_two_by_two_characteristic_polynomial():
    lam, _ = sym_eigen(np.array([[16.0, 4.0], [4.0, 4.0]]))
    roots = np.sort(np.roots([1, -20, 48]))[::-1]
    assert np.allclose(lam, roots, rtol=0, atol=1e-12)


@pytest.mark.parametrize("d", [2, 7, 50])
def test_jacobi_reconstruction_and_orthonormality(d):
    s = sym(d, d)
    lam, u = sym_eigen(s, "jacobi")
    assert np.linalg.norm(u @ np.diag(lam) @ u.T - s) <= 1e-9 * np.linalg.norm(s)
    assert np.abs(u.T @ u - np.eye(d)).max() <= 1e-10
    assert np.all(np.diff(lam) <= 0)
    assert np.allclose(lam, np.linalg.eigvalsh(s)[::-1], atol=1e-10)


def test_solver_choice_and_sign_convention():
    s = sym(80, 3)
    lam_j, u_j = sym_eigen(s, "jacobi")
    lam_l, u_l = sym_eigen(s, "lapack")
    assert np.allclose(lam_j, lam_l, atol=1e-10)
    assert np.allclose(u_j, u_l, atol=1e-7)
    idx = np.argmax(np.abs(u_j), axis=0)
    assert np.all(u_j[idx, np.arange(80)] > 0)


def test_eigen_input_errors():
    with pytest.raises(ConfigError):
        sym_eigen(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ConfigError):
        sym_eigen(np.ones((2, 3)))
    with pytest.raises(ConfigError):
        sym_eigen(np.eye(2), "qr")


def test_repeated_eigenvalues_are_deterministic():
    a = sym_eigen(np.eye(3) * 2.0)
    b = sym_eigen(np.eye(3) * 2.0)
    assert np.array_equal(a[1], b[1]) and np.allclose(a[1].T @ a[1], np.eye(3))


def test_model_rejects_non_orthonormal():
    with pytest.raises(NumericalError):
        PcaModel(np.ones((3, 1)), np.ones(1), np.zeros(3))


def test_project_reconstruct_examples():
    x = sample_superstatistical(GaussianSpec(np.diag([3.0, 2.0, 1.0])), Subordinator.stable(1.2), 100, RngSeed(1))
    full = fit_pca(x, "m1c", 3)
    assert np.allclose(project_reconstruct(x, full), x, atol=1e-9 * np.abs(x).max())
    w = np.linalg.qr(np.random.default_rng(2).standard_normal((3, 2)))[0]
    model = PcaModel(w, np.ones(2), np.zeros(3))
    inside = w @ np.random.default_rng(3).standard_normal((2, 10))
    assert np.allclose(project_reconstruct(inside, model), inside)
    axis = PcaModel(np.eye(3)[:, :1], np.ones(1), np.zeros(3))
    r = project_reconstruct(x, axis)
    assert np.array_equal(r[0], x[0]) and np.all(r[1:] == 0)
    with pytest.raises(ConfigError):
        project_reconstruct(np.ones((4, 5)), axis)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32))
def test_projector_idempotence(d, seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, d + 1))
    model = PcaModel(random_orthonormal(d, m, rng), np.ones(m), rng.standard_normal(d))
    x = rng.standard_cauchy((d, 20))
    once = project_reconstruct(x, model)
    assert np.abs(project_reconstruct(once, model) - once).max() <= 1e-10 * max(1.0, np.abs(once).max())


def test_fit_pca_validation():
    x = np.random.default_rng(4).standard_normal((3, 50))
    with pytest.raises(ConfigError):
        fit_pca(x, "m1c", 0)
    with pytest.raises(ConfigError):
        fit_pca(x, "m1c", 4)
    with pytest.raises(ConfigError):
        fit_pca(x, "m1c", 1, center="trimmed")


def test_pc_recovery_heavy_vs_classical():
    r = np.array([[1.0, 0.8], [0.8, 1.0]])
    sigma = r @ np.diag([1.0, 0.4]) @ r
    truth = np.linalg.eigh(sigma)[1][:, -1]
    x = sample_superstatistical(GaussianSpec(sigma), Subordinator.stable(0.7), 800, RngSeed(5))
    assert abs(cosine_similarity(fit_pca(x, "m1c").components[:, 0], truth)) >= 0.99


@pytest.mark.parametrize("method", ["m1a", "m1b", "m1c", "m3", "tyler"])
def test_gaussian_methods_agree_with_empirical(method):
    d = 5
    lam = np.array([5.0, 3.0, 2.0, 1.5, 1.0])
    q = random_orthonormal(d, d, np.random.default_rng(6))
    x = sample_superstatistical(GaussianSpec(q @ np.diag(lam) @ q.T), Subordinator.degenerate(1.0), 10**5, RngSeed(7))
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u = fit_pca(x, method).components[:, 0]
    v = fit_pca(x, "empirical").components[:, 0]
    assert abs(cosine_similarity(u, v)) >= 0.99


def test_cosine_examples():
    assert cosine_similarity([1, 2], [1, 2]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 3]) == 0.0
    assert cosine_similarity([1, 1], [1, 0]) == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(ConfigError):
        cosine_similarity([0, 0], [1, 0])
    assert subspace_cosine(np.eye(3)[:, :2], np.eye(3)[:, [1, 0]]) == pytest.approx(1.0)


def test_log_cost_basics():
    w = np.eye(3)[:, :1]
    rep = log_cost(np.zeros((3, 7)), w)
    assert rep.value == 0.0 and rep.n_used == 7
    with pytest.raises(ConfigError):
        log_cost(np.zeros((3, 7)), np.ones((3, 1)))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32), st.booleans())
def test_theorem1_per_sample(d, seed, orthonormal_m):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, d))
    w = random_orthonormal(d, m, rng)
    mm = random_orthonormal(d, m, rng) if orthonormal_m else rng.standard_normal((d, m))
    x = rng.standard_cauchy((d, 1000))
    assert np.all(residual_norms_sq(x, w, mm) >= residual_norms_sq(x, w, w))
    assert log_cost(x, w, mm).value >= log_cost(x, w).value


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32))
def test_rotation_invariance(d, seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, d + 1))
    w = random_orthonormal(d, m, rng)
    q = random_orthonormal(m, m, rng)
    x = rng.standard_cauchy((d, 200))
    assert abs(log_cost(x, w @ q).value - log_cost(x, w).value) <= 1e-10


def test_monotone_in_m():
    x = sample_superstatistical(GaussianSpec(np.diag([5.0, 4.0, 3.0, 2.0, 1.0])), Subordinator.stable(1.0), 2000,
                                RngSeed(8))
    u = fit_pca(x, "m1c", 5, center="none").components
    costs = [log_cost(x, u[:, :m]).value for m in range(1, 6)]
    assert all(b <= a for a, b in zip(costs, costs[1:]))


def test_theorem2_optimal_projector():
    d, m, wins, seeds = 4, 1, 0, 20
    lam = np.array([6.0, 2.0, 1.0, 0.5])
    for s in range(seeds):
        rng = np.random.default_rng(100 + s)
        q = random_orthonormal(d, d, rng)
        sigma = q @ np.diag(lam) @ q.T
        x = sample_superstatistical(GaussianSpec(sigma), Subordinator.stable(1.0), 10**4, RngSeed(200 + s))
        best = log_cost(x, q[:, :m]).value
        others = [log_cost(x, random_orthonormal(d, m, rng)).value for _ in range(200)]
        wins += best <= min(others)
    assert wins >= 0.95 * seeds
