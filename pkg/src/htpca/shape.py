"""Shape (latent Gaussian covariance) estimators for heavy-tailed data.

Every estimator takes a ``d x n`` data matrix whose columns are samples and
returns a :class:`ShapeEstimate`.  Outputs equal the latent covariance only up
to a positive scalar, which leaves eigenvectors untouched.

Estimators
----------
m1a, m1b, m1c
    pairwise ratio of marginals; each pair ``x_i / x_j`` is Cauchy with
    location ``rho * s_i / s_j`` and scale ``(s_i / s_j) * sqrt(1 - rho**2)``,
    inverted by one of three formulas (A, B, C).
m3
    law-of-large-numbers gaussianization: estimate each column's ``A_j``
    from its squared norm and divide it out.
tyler, empirical
    baselines.

The log-correlation estimator (m2) lives in :mod:`htpca.logcorr`.
"""

from dataclasses import dataclass, field
import logging
import math
import warnings

import numpy as np

from .errors import ConfigError, IllConditionedRowError, NonConvergenceError, ZeroColumnError
from .robust import cauchy_fit, cauchy_fit_rows, marginal_scale_rows

log = logging.getLogger(__name__)

FORMULAS = ("A", "B", "C")
DENOM_EPS = 1e-12
FORMULA_B_SLACK = 0.25
CLAMP_WARN_FRACTION = 0.05
_CHUNK_ELEMS = 2_000_000


class DataQualityWarning(UserWarning):
    pass


@dataclass
class ShapeEstimate:
    """Symmetric PSD shape matrix plus estimator diagnostics.

    Behaves like the underlying array under ``np.asarray``.
    """

    matrix: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)
    a_hat: np.ndarray = None

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    @property
    def shape(self):
        return self.matrix.shape

    def correlation(self, i=0, j=1):
        m = self.matrix
        return float(m[i, j] / math.sqrt(m[i, i] * m[j, j]))


def _as_data(x, min_n=2, min_d=1):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ConfigError(f"data must be a d x n matrix, got shape {x.shape}")
    d, n = x.shape
    if n < min_n:
        raise ConfigError(f"need at least {min_n} samples, got {n}")
    if d < min_d:
        raise ConfigError(f"need dimension at least {min_d}, got {d}")
    if not np.all(np.isfinite(x)):
        raise ConfigError("data contains non-finite values")
    return x


def psd_project(s):
    """Symmetrize, clip negative eigenvalues at zero and reassemble."""
    s = (np.asarray(s, dtype=float) + np.asarray(s, dtype=float).T) / 2
    lam, vec = np.linalg.eigh(s)
    if lam[0] >= 0:
        return s
    out = (vec * np.clip(lam, 0, None)) @ vec.T
    return (out + out.T) / 2


# ---------------------------------------------------------------------------
# ratio formulas


def rho_from_ratio_arrays(mu, gamma, si=None, sj=None, formula="C"):
    """Vectorized formula A/B/C.  Returns ``(rho, clamped, domain_violation)``."""
    mu = np.asarray(mu, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if formula not in FORMULAS:
        raise ConfigError(f"formula must be one of {FORMULAS}, got {formula!r}")
    violated = np.zeros(mu.shape, dtype=bool)
    if formula == "A":
        raw = mu / np.hypot(mu, gamma)
        raw = np.where(np.isfinite(raw), raw, 0.0)
    else:
        ratio = np.asarray(sj, dtype=float) / np.asarray(si, dtype=float)
        if formula == "C":
            raw = mu * ratio
        else:
            inside = 1 - (ratio * gamma) ** 2
            violated = inside < -FORMULA_B_SLACK
            raw = np.sign(mu) * np.sqrt(np.clip(inside, 0, None))
            clamped = (inside < 0) & ~violated
            return raw, clamped, violated
    rho = np.clip(raw, -1.0, 1.0)
    return rho, np.abs(raw) > 1.0, violated


def rho_from_ratio(cp, si=1.0, sj=1.0, formula="C", diagnostics=None):
    """Correlation from the Cauchy fit of ``x_i / x_j``.

    ``diagnostics``, when given, is a dict whose ``clamped`` and
    ``domain_violations`` counters are incremented.

    >>> from htpca.robust import CauchyParams
    >>> rho_from_ratio(CauchyParams(1.2, 1.6), 4.0, 2.0, "C")
    0.6
    """
    if not cp.gamma >= 0:
        raise ConfigError("Cauchy scale must be non-negative")
    if formula in ("B", "C") and not (si > 0 and sj > 0):
        raise ConfigError("marginal scales must be positive")
    rho, clamped, violated = rho_from_ratio_arrays(cp.mu, cp.gamma, si, sj, formula)
    if diagnostics is not None:
        diagnostics["clamped"] = diagnostics.get("clamped", 0) + int(clamped)
        diagnostics["domain_violations"] = diagnostics.get("domain_violations", 0) + int(violated)
    return float(rho)


# ---------------------------------------------------------------------------
# pairwise ratio fits shared by m1 and m2


def pairwise_ratio_fits(x, scales, mode="ml"):
    """Cauchy fits of ``x_i / x_j`` for every unordered pair.

    The numerator ``i`` is the row with the larger marginal scale (lower
    index on exact ties), so the fits do not depend on row order.  Returns
    ``(i, j, mu, gamma)`` arrays of length ``d*(d-1)/2``.  Samples whose
    denominator is below ``1e-12 * scale_j`` are dropped.
    """
    d, n = x.shape
    small = np.abs(x) <= DENOM_EPS * scales[:, None]
    excluded = small.sum(axis=1)
    bad = np.flatnonzero(excluded > n / 2)
    if bad.size:
        raise IllConditionedRowError(int(bad[0]), f"row {int(bad[0])}: {excluded[bad[0]]} of {n} entries are ~0")
    lo, hi = np.triu_indices(d, k=1)
    swap = scales[hi] > scales[lo]
    ii, jj = np.where(swap, hi, lo), np.where(swap, lo, hi)
    mu = np.empty(ii.size)
    gamma = np.empty(ii.size)
    clean_den = excluded == 0
    batch = np.flatnonzero(clean_den[jj])
    step = max(1, _CHUNK_ELEMS // n)
    for start in range(0, batch.size, step):
        sel = batch[start:start + step]
        ratios = x[ii[sel]] / x[jj[sel]]
        mu[sel], gamma[sel], _ = cauchy_fit_rows(ratios, mode)
    for k in np.flatnonzero(~clean_den[jj]):
        keep = ~small[jj[k]]
        p = cauchy_fit(x[ii[k], keep] / x[jj[k], keep], mode)
        mu[k], gamma[k] = p.mu, p.gamma
    return ii, jj, mu, gamma


def _assemble(d, ii, jj, rho, scales):
    s = np.diag(scales ** 2)
    off = scales[ii] * scales[jj] * rho
    s[ii, jj] = off
    s[jj, ii] = off
    return psd_project(s)


def _clamp_check(diag, total):
    if total and diag["clamped"] > CLAMP_WARN_FRACTION * total:
        warnings.warn(f"{diag['clamped']} of {total} correlation estimates were clamped", DataQualityWarning,
                      stacklevel=3)


def estimate_shape_method1(x, formula="C", mode="ml"):
    """Ratio-of-marginals shape estimate.

    Diagonal entries are squared marginal scales, off-diagonals
    ``s_i * s_j * rho_ij``; the result is PSD-projected.
    """
    x = _as_data(x, min_n=8, min_d=2)
    if formula not in FORMULAS:
        raise ConfigError(f"formula must be one of {FORMULAS}, got {formula!r}")
    zero_rows = np.flatnonzero(~np.any(x != 0, axis=1))
    if zero_rows.size:
        raise IllConditionedRowError(int(zero_rows[0]), f"row {int(zero_rows[0])} is identically zero")
    sparse_rows = np.flatnonzero((x == 0).sum(axis=1) > x.shape[1] / 2)
    if sparse_rows.size:
        raise IllConditionedRowError(int(sparse_rows[0]), f"row {int(sparse_rows[0])}: more than half the entries are 0")
    d = x.shape[0]
    scales = marginal_scale_rows(x, mode)
    ii, jj, mu, gamma = pairwise_ratio_fits(x, scales, mode)
    rho, clamped, violated = rho_from_ratio_arrays(mu, gamma, scales[ii], scales[jj], formula)
    rho = np.where(violated, 0.0, rho)
    diag = {"clamped": int(clamped.sum()), "domain_violations": int(violated.sum()), "pairs": int(ii.size)}
    _clamp_check(diag, ii.size)
    return ShapeEstimate(_assemble(d, ii, jj, rho, scales), f"m1{formula.lower()}", diag)


def estimate_shape_method3(x, mode="ml"):
    """Gaussianize columns by ``A_j = |x_j|^2 / t`` with ``t`` the summed squared scales.

    Returns a :class:`ShapeEstimate` whose ``a_hat`` holds the per-column
    subordinator estimates.
    """
    x = _as_data(x, min_n=2)
    d = x.shape[0]
    if d < 4:
        raise ConfigError(f"method m3 needs dimension >= 4 (got {d}); it relies on a law of large numbers over rows")
    if d < 50:
        warnings.warn(f"method m3 with d={d} < 50: A estimates are noisy", DataQualityWarning, stacklevel=2)
    norms = np.einsum("ij,ij->j", x, x)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroColumnError(int(zero[0]))
    t_hat = float(np.sum(marginal_scale_rows(x, mode) ** 2))
    a_hat = norms / t_hat
    y = x / np.sqrt(a_hat)
    cov = y @ y.T / x.shape[1]
    return ShapeEstimate(psd_project(cov), "m3", {"trace_estimate": t_hat}, a_hat=a_hat)


def tyler_scatter(x, tol=1e-8, max_iter=500):
    """Tyler's M-estimator of scatter, normalized to trace ``d``.

    Iterates ``S <- (d/n) sum_j x_j x_j^T / (x_j^T S^-1 x_j)`` from the
    identity.  Raises :class:`NonConvergenceError` (carrying the last iterate)
    after ``max_iter`` sweeps.
    """
    x = _as_data(x, min_n=2)
    d, n = x.shape
    keep = np.any(x != 0, axis=0)
    diag = {"dropped_zero_columns": int((~keep).sum()), "regularized": 0, "iterations": 0}
    x = x[:, keep]
    n = x.shape[1]
    if n <= d:
        raise ConfigError(f"Tyler's estimator needs n > d (n={n}, d={d})")
    s = np.eye(d)
    for it in range(1, max_iter + 1):
        try:
            c = np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            s = s + 1e-12 * np.trace(s) * np.eye(d)
            diag["regularized"] += 1
            c = np.linalg.cholesky(s)
        w = np.linalg.solve(c, x)
        q = np.einsum("ij,ij->j", w, w)
        new = (d / n) * (x / q) @ x.T
        new = (new + new.T) / 2
        new *= d / np.trace(new)
        change = np.linalg.norm(new - s) / np.linalg.norm(s)
        s = new
        if change < tol:
            diag["iterations"] = it
            return ShapeEstimate(s, "tyler", diag)
    raise NonConvergenceError(f"Tyler iteration did not converge in {max_iter} iterations", last=s)


def tyler_residual(x, s):
    """Relative Frobenius residual of the Tyler fixed-point equation."""
    x = np.asarray(x, dtype=float)
    x = x[:, np.any(x != 0, axis=0)]
    d, n = x.shape
    q = np.einsum("ij,ij->j", x, np.linalg.solve(s, x))
    return float(np.linalg.norm(s - (d / n) * (x / q) @ x.T) / np.linalg.norm(s))


def empirical_covariance(x, center="none"):
    x = _as_data(x, min_n=2)
    if center == "mean":
        x = x - x.mean(axis=1, keepdims=True)
    elif center == "median":
        x = x - np.median(x, axis=1, keepdims=True)
    elif center != "none":
        raise ConfigError(f"center must be none, median or mean, got {center!r}")
    return ShapeEstimate(x @ x.T / x.shape[1], "empirical", {"center": center})


METHODS = ("m1a", "m1b", "m1c", "m2", "m3", "tyler", "empirical")


def estimate_shape(x, method, mode="ml", lut=None, log_moments=None, center="none"):
    """Dispatch by method name (``m1a|m1b|m1c|m2|m3|tyler|empirical``)."""
    if method in ("m1a", "m1b", "m1c"):
        return estimate_shape_method1(x, method[-1].upper(), mode)
    if method == "m2":
        from .logcorr import estimate_shape_method2
        return estimate_shape_method2(x, lut, log_moments, mode)
    if method == "m3":
        return estimate_shape_method3(x, mode)
    if method == "tyler":
        return tyler_scatter(x)
    if method == "empirical":
        return empirical_covariance(x, center)
    raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
