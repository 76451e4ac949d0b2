import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from htpca.errors import ConfigError, IllConditionedRowError, NonConvergenceError, ZeroColumnError
from htpca.logcorr import subordinator_log_moments
from htpca.pca import sym_eigen
from htpca.robust import CauchyParams
from htpca.sampling import GaussianSpec, RngSeed, Subordinator, sample_superstatistical
from htpca.shape import (
    DataQualityWarning,
    empirical_covariance,
    estimate_shape,
    estimate_shape_method1,
    estimate_shape_method3,
    rho_from_ratio,
    tyler_scatter,
    tyler_residual,
)

CAUCHY = Subordinator.stable(1.0)


def draw(sigma, n, seed, sub=CAUCHY):
    return sample_superstatistical(GaussianSpec(np.asarray(sigma, dtype=float)), sub, n, RngSeed(seed))


def exact_ratio_params(rho, si, sj):
    # x_i / x_j for a bivariate normal pair is Cauchy(rho si/sj, (si/sj) sqrt(1 - rho^2))
    return CauchyParams(rho * si / sj, si / sj * math.sqrt(1 - rho * rho))


@pytest.mark.parametrize("formula", ["A", "B", "C"])
def test_zero_location_gives_zero(formula):
    assert rho_from_ratio(CauchyParams(0.0, 0.7), 2.0, 2.0, formula) == 0.0


def test_exact_ratio_example():
    cp = CauchyParams(1.2, 1.6)
    assert math.isclose(rho_from_ratio(cp, 4.0, 2.0, "A"), 0.6, abs_tol=1e-12)
    assert math.isclose(rho_from_ratio(cp, 4.0, 2.0, "C"), 0.6, abs_tol=1e-12)
    assert math.isclose(rho_from_ratio(cp, 4.0, 2.0, "B"), 0.6, abs_tol=1e-12)


def test_perfect_correlation():
    cp = CauchyParams(2.0, 0.0)
    assert rho_from_ratio(cp, 2.0, 1.0, "A") == 1.0
    assert rho_from_ratio(cp, 2.0, 1.0, "C") == 1.0


@pytest.mark.parametrize("rho", np.round(np.arange(-0.9, 0.91, 0.1), 1))
def test_formula_consistency(rho):
    si, sj = 3.0, 1.5
    cp = exact_ratio_params(rho, si, sj)
    assert abs(rho_from_ratio(cp, si, sj, "A") - rho) < 1e-12
    assert abs(rho_from_ratio(cp, si, sj, "C") - rho) < 1e-12
    if rho >= 0:
        assert abs(rho_from_ratio(cp, si, sj, "B") - rho) < 1e-12


def test_formula_b_domain_flag_and_clamp_counter():
    diag = {}
    assert rho_from_ratio(CauchyParams(0.5, 3.0), 1.0, 1.0, "B", diag) == 0.0
    assert diag["domain_violations"] == 1
    rho_from_ratio(CauchyParams(5.0, 0.1), 1.0, 1.0, "C", diag)
    assert diag["clamped"] == 1
    with pytest.raises(ConfigError):
        rho_from_ratio(CauchyParams(0.5, -1.0))


def test_method1_independent_coordinates():
    est = estimate_shape_method1(draw(np.diag([4.0, 1.0]), 10**5, 1))
    assert abs(est.correlation()) <= 0.03


def test_method1_psd_symmetric_and_rejects_zero_row():
    x = draw(np.eye(4), 300, 2)
    s = estimate_shape_method1(x).matrix
    assert np.allclose(s, s.T, rtol=0, atol=1e-12) and np.linalg.eigvalsh(s).min() >= -1e-12
    assert np.all(np.diag(s) > 0)
    x[2] = 0
    with pytest.raises(IllConditionedRowError) as exc:
        estimate_shape_method1(x)
    assert exc.value.row == 2


def test_method1_mostly_zero_denominator():
    x = draw(np.eye(3), 100, 3)
    x[1, :60] = 0
    with pytest.raises(IllConditionedRowError):
        estimate_shape_method1(x)


def test_method2_independent_coordinates(lut):
    from htpca.logcorr import log_correlations

    sub = Subordinator.stable(1.0)
    lm = subordinator_log_moments(sub, rng=RngSeed(7))
    x = draw(np.eye(2), 10**5, 4, sub)
    assert abs(log_correlations(x, lm)[0, 1] - 0.40345543978) < 0.02
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        est = estimate_shape(x, "m2", lut=lut, log_moments=lm)
    assert abs(est.correlation()) <= 0.1


def test_method2_flags_small_rho(lut):
    lm = subordinator_log_moments(CAUCHY, rng=RngSeed(8))
    x = draw([[16.0, 1.6], [1.6, 4.0]], 10**5, 5)
    with pytest.warns(DataQualityWarning):
        est = estimate_shape(x, "m2", lut=lut, log_moments=lm)
    assert est.diagnostics["unreliable"]
    with pytest.raises(ConfigError):
        estimate_shape(x, "m2", lut=lut)


def test_method3_concentration():
    d = 200
    est = estimate_shape_method3(draw(np.eye(d), 1000, 6, Subordinator.degenerate(4.0)))
    a = est.a_hat
    assert a.std() / a.mean() <= 2 * math.sqrt(2 / d)


@pytest.mark.xfail(strict=True, reason="at n=1000, d=100 the sample-covariance spectrum spreads to the "
                   "Marchenko-Pastur edge 2 sqrt(d/n) + d/n = 0.73 whatever the estimator")
def test_method3_flat_spectrum_at_desk_scale():
    lam = np.linalg.eigvalsh(estimate_shape_method3(draw(np.eye(100), 1000, 7)).matrix)
    assert np.abs(lam / lam.mean() - 1).max() <= 0.15


def test_method3_flat_spectrum_large_n():
    lam = np.linalg.eigvalsh(estimate_shape_method3(draw(np.eye(100), 50000, 7)).matrix)
    assert np.abs(lam / lam.mean() - 1).max() <= 0.15


def test_method3_refusals():
    with pytest.raises(ConfigError):
        estimate_shape_method3(draw(np.eye(2), 100, 8))
    x = draw(np.eye(60), 100, 9)
    x[:, 17] = 0
    with pytest.raises(ZeroColumnError) as exc:
        estimate_shape_method3(x)
    assert exc.value.column == 17
    with pytest.warns(DataQualityWarning):
        estimate_shape_method3(draw(np.eye(10), 100, 10))


def test_tyler_spherical_cauchy():
    s = tyler_scatter(draw(np.eye(2), 10**4, 11)).matrix
    assert np.abs(s - np.eye(2)).max() < 0.05


def test_tyler_axis_points():
    e = np.eye(3)
    x = np.hstack([e, -e, e, -e])
    est = tyler_scatter(x)
    assert est.diagnostics["iterations"] <= 2
    assert np.allclose(est.matrix, np.eye(3))


def test_tyler_fixed_point_residual_and_errors():
    x = draw([[16.0, 4.0], [4.0, 4.0]], 500, 12)
    tol = 1e-8
    s = tyler_scatter(x, tol=tol).matrix
    assert tyler_residual(x, s) < 10 * tol
    with pytest.raises(NonConvergenceError) as exc:
        tyler_scatter(x, max_iter=1)
    assert exc.value.last.shape == (2, 2)
    with pytest.raises(ConfigError):
        tyler_scatter(draw(np.eye(5), 5, 13))


def test_empirical_examples():
    x = np.array([[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]])
    assert np.allclose(empirical_covariance(x).matrix, 0.5 * np.eye(2))
    sigma = np.array([[16.0, 4.0], [4.0, 4.0]])
    s = empirical_covariance(draw(sigma, 10**5, 14, Subordinator.degenerate(1.0))).matrix
    assert np.all(np.abs(s - sigma) <= 0.02 * np.abs(sigma))


def test_unknown_method():
    with pytest.raises(ConfigError):
        estimate_shape(np.ones((2, 10)), "m9")


def _directions(method, x, lut, lm):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        return sym_eigen(np.asarray(estimate_shape(x, method, lut=lut, log_moments=lm)))[1]


@pytest.mark.parametrize("method", ["m1a", "m1b", "m1c", "m2", "m3", "tyler"])
@pytest.mark.parametrize("c", [0.1, 10.0])
def test_scale_invariance_of_directions(method, c, lut):
    d = 6 if method == "m3" else 3
    rng = np.random.default_rng(15)
    b = rng.standard_normal((d, d))
    sigma = b @ b.T + d * np.eye(d)
    x = draw(sigma, 2000, 16)
    lm = subordinator_log_moments(CAUCHY, rng=RngSeed(17))
    u, v = _directions(method, x, lut, lm), _directions(method, c * x, lut, lm)
    assert np.all(np.abs(np.sum(u * v, axis=0)) >= 1 - 1e-8)


@settings(max_examples=15, deadline=None)
@given(st.permutations(range(4)), st.integers(0, 2**32), st.sampled_from(["m1a", "m1b", "m1c", "tyler", "empirical"]))
def test_permutation_equivariance(perm, seed, method):
    perm = list(perm)
    x = draw(np.diag([4.0, 3.0, 2.0, 1.0]) + 0.5, 200, seed)
    a = np.asarray(estimate_shape(x, method))
    b = np.asarray(estimate_shape(x[perm], method))
    assert np.allclose(b, a[np.ix_(perm, perm)], rtol=1e-10, atol=1e-12 * np.abs(a).max())
