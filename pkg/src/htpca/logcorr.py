"""Log-correlation shape estimator and its lookup table.

For a unit-variance Gaussian pair with correlation ``rho``, the
log-correlation ``ell(rho) = E[log|G1| log|G2|]`` increases monotonically
from ``E[log|G|]**2`` at ``rho=0`` to ``E[log|G|**2]`` at ``rho=1``.  The table
is built numerically: conditioning on ``G1`` reduces the inner expectation to
``h(c) = E[log|c + Z|]``, and both the inner and outer integrals are smooth
after the substitution ``|z| = exp(u)``, so a trapezoid rule on ``u``
converges geometrically.  Far from the singularity (``|c| > 8``) ``h`` is
evaluated with Gauss-Hermite nodes instead.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import digamma, polygamma, roots_hermitenorm

from .errors import ConfigError, NumericalError
from .sampling import RngSeed, sample_subordinator
from .shape import (
    DataQualityWarning,
    ShapeEstimate,
    _as_data,
    _assemble,
    pairwise_ratio_fits,
)
from .robust import marginal_scale_rows

E_LOG_ABS_G = -(np.euler_gamma + math.log(2.0)) / 2
"""E[log|Z|] for a standard normal Z."""

UNRELIABLE_RHO = 0.3
_NEAR_FIELD = 8.0
_U_LO, _U_HI = -40.0, 4.0


def _phi(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def _shifted_log_near(c, du=0.005):
    # h(c) = int_0^inf log(w) [phi(w - c) + phi(w + c)] dw, with w = exp(u)
    u = np.arange(_U_LO, _U_HI + du / 2, du)
    w = np.exp(u)
    c = np.asarray(c, dtype=float)[:, None]
    return (u * w * (_phi(w - c) + _phi(w + c))).sum(axis=1) * du


class _ShiftedLog:
    """``h(c) = E[log|c + Z|]`` for standard normal ``Z``."""

    def __init__(self, order):
        grid = np.linspace(0.0, _NEAR_FIELD, 4001)
        vals = _shifted_log_near(grid)
        self._spline = CubicSpline(np.r_[-grid[:0:-1], grid], np.r_[vals[:0:-1], vals])
        nodes, weights = roots_hermitenorm(order)
        self._nodes = nodes
        self._weights = weights / weights.sum()

    def __call__(self, c):
        c = np.abs(np.asarray(c, dtype=float))
        out = np.empty_like(c)
        near = c <= _NEAR_FIELD
        out[near] = self._spline(c[near])
        far = c[~near][:, None]
        out[~near] = np.log(far[:, 0]) + (self._weights * np.log(np.abs(1 + self._nodes / far))).sum(axis=1)
        return out


def ell_values(rhos, order=64, du=0.05):
    """``E[log|G1| log|G2|]`` for unit-variance normal pairs at each ``rho``."""
    if order < 64:
        raise ConfigError("quadrature order must be at least 64")
    h = _ShiftedLog(order)
    u = np.arange(_U_LO, _U_HI, du)
    z = np.exp(u)
    weights = 2 * u * z * _phi(z) * du
    out = []
    for rho in np.abs(np.asarray(rhos, dtype=float)):
        if rho >= 1.0:
            inner = np.log(z)
        else:
            s = math.sqrt(1 - rho * rho)
            inner = math.log(s) + h(rho * z / s)
        out.append(float(weights @ inner))
    return np.array(out)


@dataclass
class LogLut:
    """Monotone map from ``|rho|`` to Gaussian log-correlation."""

    rho_grid: np.ndarray
    ell_values: np.ndarray
    step: float
    order: int = 64

    def __post_init__(self):
        self.rho_grid = np.asarray(self.rho_grid, dtype=float)
        self.ell_values = np.asarray(self.ell_values, dtype=float)
        if np.any(np.diff(self.ell_values) <= 0):
            raise NumericalError("log-correlation table is not strictly increasing; raise the quadrature order")

    def ell(self, rho):
        return np.interp(np.abs(rho), self.rho_grid, self.ell_values)

    def invert(self, ell):
        """``|rho|`` for each value; also returns a mask of out-of-range inputs."""
        ell = np.asarray(ell, dtype=float)
        out_of_range = (ell < self.ell_values[0]) | (ell > self.ell_values[-1])
        return np.interp(ell, self.ell_values, self.rho_grid), out_of_range


def build_log_lut(step=1e-3, order=64):
    """Tabulate ``ell`` on ``rho = 0, step, ..., 1``."""
    if not (0 < step <= 1e-2):
        raise ConfigError(f"step must lie in (0, 0.01], got {step}")
    n = int(round(1 / step))
    if abs(n * step - 1) > 1e-9:
        raise ConfigError("step must divide 1 evenly")
    grid = np.linspace(0.0, 1.0, n + 1)
    return LogLut(grid, ell_values(grid, order), step, order)


@dataclass(frozen=True)
class SubordinatorLogMoments:
    e_log_a: float
    e_log_a_sq: float
    se_log_a: float = 0.0
    se_log_a_sq: float = 0.0
    e_log_abs_g: float = E_LOG_ABS_G

    def __post_init__(self):
        if self.e_log_a_sq < self.e_log_a ** 2 - 1e-12:
            raise ConfigError("E[(log A)^2] must be at least E[log A]^2")


def subordinator_log_moments(sub, n_mc=10**6, rng=None, analytic=True):
    """``E[log A]`` and ``E[(log A)^2]``.

    Degenerate and Student subordinators use closed forms when ``analytic``
    is set; everything else is Monte Carlo with standard errors.
    """
    if sub.kind == "degenerate":
        la = math.log(sub.a)
        return SubordinatorLogMoments(la, la * la)
    if sub.kind == "student" and analytic:
        # A = nu / U, U ~ chi2(nu): log U has mean digamma(nu/2) + log 2, variance trigamma(nu/2)
        mean = math.log(sub.nu) - digamma(sub.nu / 2) - math.log(2)
        var = float(polygamma(1, sub.nu / 2))
        return SubordinatorLogMoments(mean, var + mean * mean)
    if n_mc < 10**6:
        raise ConfigError("Monte-Carlo log-moments need n_mc >= 1e6")
    rng = rng if rng is not None else RngSeed(0)
    la = np.log(sample_subordinator(sub, n_mc, rng))
    la2 = la * la
    return SubordinatorLogMoments(
        float(la.mean()),
        float(la2.mean()),
        float(la.std(ddof=1) / math.sqrt(n_mc)),
        float(la2.std(ddof=1) / math.sqrt(n_mc)),
    )


def log_correlations(x, log_moments):
    """Gaussian log-correlations ``ell_G`` for every row pair of ``x``.

    Each row is normalized so that its latent Gaussian has unit variance,
    using ``E[log|X_i|] = E[log A]/2 + log sigma_i + E[log|G|]``.  Zero
    entries are excluded from the log products.
    """
    logs = np.log(np.abs(x), where=x != 0, out=np.full(x.shape, np.nan))
    finite = np.isfinite(logs)
    excluded = (~finite).sum(axis=1)
    bad = np.flatnonzero(excluded > x.shape[1] / 2)
    if bad.size:
        raise NumericalError(f"row {int(bad[0])}: more than half the entries are zero")
    row_mean = np.nanmean(logs, axis=1)
    target = 0.5 * log_moments.e_log_a + log_moments.e_log_abs_g
    centred = np.where(finite, logs - row_mean[:, None] + target, 0.0)
    fm = finite.astype(float)
    ell_x = (centred @ centred.T) / (fm @ fm.T)
    return ell_x - 0.25 * log_moments.e_log_a_sq - log_moments.e_log_a * log_moments.e_log_abs_g


def estimate_shape_method2(x, lut, log_moments, mode="ml"):
    """Log-correlation shape estimate.

    ``|rho_ij|`` comes from inverting the lookup table; its sign is the sign
    of the Cauchy location of ``x_i / x_j``.  Estimates with ``|rho| < 0.3``
    fall in a regime where the table is flat and are flagged.
    """
    if lut is None or log_moments is None:
        raise ConfigError("method m2 needs a lookup table and subordinator log-moments")
    x = _as_data(x, min_n=8, min_d=2)
    d = x.shape[0]
    ell_g = log_correlations(x, log_moments)
    scales = marginal_scale_rows(x, mode)
    ii, jj, mu, _ = pairwise_ratio_fits(x, scales, mode)
    abs_rho, out_of_range = lut.invert(ell_g[ii, jj])
    rho = np.sign(mu) * abs_rho
    unreliable = abs_rho < UNRELIABLE_RHO
    diag = {
        "clamped": int(out_of_range.sum()),
        "pairs": int(ii.size),
        "unreliable_pairs": int(unreliable.sum()),
        "unreliable": bool(unreliable.any()),
        "ell_g": ell_g[ii, jj],
    }
    if unreliable.any():
        warnings.warn(f"{int(unreliable.sum())} pair(s) with |rho| < {UNRELIABLE_RHO}: log-correlation estimates "
                      "are unreliable there", DataQualityWarning, stacklevel=2)
    return ShapeEstimate(_assemble(d, ii, jj, rho, scales), "m2", diag)
