"""Univariate location and scale estimators for heavy-tailed samples.

Two modes are offered everywhere:

``quantile``
    median and half the interquartile range (type-7 quantiles).
``ml``
    Cauchy maximum likelihood, Newton-refined from the quantile estimate.

Both are equivariant under affine maps, so they can stand in for the
location/"power" of a marginal whose mean or variance may not exist.  The
batched ``*_rows`` functions fit every row of a 2-D array at once and are what
the shape estimators call.
"""

from dataclasses import dataclass
import logging

import numpy as np

from .errors import ConfigError, DegenerateSampleError

log = logging.getLogger(__name__)

MODES = ("quantile", "ml")
MIN_SAMPLES = 8
MAX_ITER = 200
REL_TOL = 1e-9


@dataclass(frozen=True)
class CauchyParams:
    mu: float
    gamma: float
    converged: bool = True

    def loglik(self, samples):
        return cauchy_loglik(samples, self.mu, self.gamma)


def cauchy_loglik(samples, mu, gamma):
    r = np.asarray(samples, dtype=float) - mu
    return float(np.sum(np.log(gamma / np.pi) - np.log(gamma * gamma + r * r)))


def _check_mode(mode):
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")


def _quantile_rows(x):
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], axis=-1)
    return med, (q3 - q1) / 2


def _newton_rows(x, mu, gamma):
    """Joint (mu, gamma) Cauchy ML for every row of standardized data ``x``.

    Returns refined ``mu``, ``gamma`` and a per-row convergence mask.  Short
    Newton steps in the concave region are taken as-is; anything else is
    backtracked on the log-likelihood.
    """
    n = x.shape[1]
    mu = mu.copy()
    gamma = gamma.copy()
    done = np.zeros(x.shape[0], dtype=bool)

    def loglik(m, g, rows):
        r = rows - m[:, None]
        return n * np.log(g) - np.log(g[:, None] ** 2 + r * r).sum(axis=1)

    for _ in range(MAX_ITER):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        xa, m, g = x[act], mu[act], gamma[act]
        g2 = g * g
        r = xa - m[:, None]
        inv = r * r
        inv += g2[:, None]
        np.reciprocal(inv, out=inv)
        ri = r * inv
        s0 = inv.sum(axis=1)
        s1 = ri.sum(axis=1)
        q0 = np.einsum("ij,ij->i", inv, inv)
        q1 = np.einsum("ij,ij->i", ri, inv)
        grad_m = 2 * s1
        grad_g = n / g - 2 * g * s0
        h_mm = 2 * (s0 - 2 * g2 * q0)
        h_mg = -4 * g * q1
        h_gg = -n / g2 + 2 * (2 * g2 * q0 - s0)
        det = h_mm * h_gg - h_mg * h_mg
        newton_ok = (h_mm < 0) & (det > 0)
        safe_det = np.where(newton_ok, det, 1.0)
        step_m = np.where(newton_ok, -(h_gg * grad_m - h_mg * grad_g) / safe_det, grad_m * g2 / n)
        step_g = np.where(newton_ok, -(h_mm * grad_g - h_mg * grad_m) / safe_det, grad_g * g2 / n)

        t = np.ones_like(m)
        accept = newton_ok & (np.abs(step_m) <= 0.25 * g) & (np.abs(step_g) <= 0.25 * g)
        todo = np.flatnonzero(~accept)
        if todo.size:
            base = loglik(m[todo], g[todo], xa[todo])
            ok_sub = np.zeros(todo.size, dtype=bool)
            for _ in range(40):
                pend = np.flatnonzero(~ok_sub)
                if pend.size == 0:
                    break
                rows = todo[pend]
                trial_g = g[rows] + t[rows] * step_g[rows]
                trial_ll = np.full(pend.size, -np.inf)
                pos = trial_g > 0
                if pos.any():
                    sel = rows[pos]
                    trial_ll[pos] = loglik(m[sel] + t[sel] * step_m[sel], trial_g[pos], xa[sel])
                ok = trial_ll >= base[pend] - 1e-12 * np.abs(base[pend])
                ok_sub[pend[ok]] = True
                t[rows[~ok]] /= 2
            accept[todo[ok_sub]] = True
        t = np.where(accept, t, 0.0)
        dm, dg = t * step_m, t * step_g
        mu[act] = m + dm
        gamma[act] = g + dg
        conv = (np.abs(dm) < REL_TOL * (1 + np.abs(mu[act]))) & (np.abs(dg) < REL_TOL * (1 + np.abs(gamma[act])))
        done[act] = conv
    # Never return a worse fit than the starting point.
    worse = loglik(mu, gamma, x) < loglik(np.zeros_like(mu), np.ones_like(gamma), x)
    done &= ~worse
    return mu, gamma, done


def _spread_guard(x, where):
    if x.shape[-1] < MIN_SAMPLES:
        raise ConfigError(f"{where}: need at least {MIN_SAMPLES} samples, got {x.shape[-1]}")
    flat = np.ptp(x, axis=-1) == 0
    if np.any(flat):
        rows = np.flatnonzero(np.atleast_1d(flat))
        raise DegenerateSampleError(f"{where}: zero spread in row(s) {rows[:10].tolist()}")


def cauchy_fit_rows(x, mode="ml"):
    """Fit ``C(mu, gamma)`` to every row of a 2-D array.

    Returns arrays ``(mu, gamma, converged)``.  Rows where the ML iteration
    does not converge keep their quantile estimate and ``converged=False``.
    """
    _check_mode(mode)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _spread_guard(x, "cauchy_fit")
    med, hiqr = _quantile_rows(x)
    if np.any(hiqr <= 0):
        rows = np.flatnonzero(hiqr <= 0)
        raise DegenerateSampleError(f"cauchy_fit: zero interquartile range in row(s) {rows[:10].tolist()}")
    if mode == "quantile":
        return med, hiqr, np.ones(x.shape[0], dtype=bool)
    # Standardize first so the fit is affine-equivariant to round-off.
    z = (x - med[:, None]) / hiqr[:, None]
    zero = np.zeros(x.shape[0])
    mu_z, g_z, conv = _newton_rows(z, zero, np.ones(x.shape[0]))
    mu = np.where(conv, med + hiqr * mu_z, med)
    gamma = np.where(conv, hiqr * g_z, hiqr)
    if not conv.all():
        log.warning("Cauchy ML did not converge for %d row(s); using quantile fit", (~conv).sum())
    return mu, gamma, conv


def cauchy_fit(samples, mode="ml"):
    """Fit a univariate Cauchy law.

    >>> p = cauchy_fit([-3.0, -1.0, -0.5, 0.0, 0.2, 0.5, 1.0, 4.0], mode="quantile")
    >>> round(p.mu, 3), round(p.gamma, 3)
    (0.1, 0.625)
    """
    x = np.asarray(samples, dtype=float).ravel()
    mu, gamma, conv = cauchy_fit_rows(x[None, :], mode)
    return CauchyParams(float(mu[0]), float(gamma[0]), bool(conv[0]))


def _symmetric_scale_rows(x, init):
    # Score equation of C(0, g) on the symmetrized sample {x, -x}:
    #   sum x^2 / (g^2 + x^2) = n / 2, monotone decreasing in g.
    n = x.shape[1]
    x2 = x * x
    u = np.log(init)
    lo = np.full_like(u, -np.inf)
    hi = np.full_like(u, np.inf)
    done = np.zeros(u.shape, dtype=bool)
    for _ in range(MAX_ITER):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        g2 = np.exp(2 * u[act])[:, None]
        ratio = x2[act] / (g2 + x2[act])
        f = ratio.sum(axis=1) - n / 2
        fprime = -2 * (ratio * g2 / (g2 + x2[act])).sum(axis=1)
        lo[act] = np.where(f > 0, u[act], lo[act])
        hi[act] = np.where(f < 0, u[act], hi[act])
        step = np.where(fprime < 0, -f / np.where(fprime < 0, fprime, -1.0), 0.0)
        new = u[act] + step
        bad = (new <= lo[act]) | (new >= hi[act]) | ~np.isfinite(new)
        mid = np.where(np.isfinite(lo[act]) & np.isfinite(hi[act]), (lo[act] + hi[act]) / 2,
                       np.where(f > 0, u[act] + 1.0, u[act] - 1.0))
        new = np.where(bad, mid, new)
        done[act] = (np.abs(new - u[act]) < REL_TOL) | (f == 0)
        u[act] = new
    return np.exp(u), done


def marginal_scale_rows(x, mode="ml"):
    """Scale of every row; ``scale(c * row) == |c| * scale(row)``."""
    _check_mode(mode)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _spread_guard(x, "marginal_scale")
    _, hiqr = _quantile_rows(x)
    if mode == "quantile":
        if np.any(hiqr <= 0):
            rows = np.flatnonzero(hiqr <= 0)
            raise DegenerateSampleError(f"marginal_scale: zero interquartile range in row(s) {rows[:10].tolist()}")
        return hiqr
    init = np.median(np.abs(x), axis=1)
    if np.any(init <= 0):
        rows = np.flatnonzero(init <= 0)
        raise DegenerateSampleError(f"marginal_scale: more than half the entries are zero in row(s) {rows[:10].tolist()}")
    scale, conv = _symmetric_scale_rows(x / init[:, None], np.ones_like(init))
    if not conv.all():
        log.warning("symmetric Cauchy scale did not converge for %d row(s); using median |x|", (~conv).sum())
    return np.where(conv, scale * init, init)


def marginal_scale(row, mode="ml"):
    return float(marginal_scale_rows(np.asarray(row, dtype=float)[None, :], mode)[0])


def location_vector(x, mode="ml"):
    """Per-row location of a ``d x n`` data matrix (the robust "average column")."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if mode == "quantile":
        _spread_guard(x, "location_vector")
        return np.median(x, axis=1)
    mu, _, _ = cauchy_fit_rows(x, mode)
    return mu
