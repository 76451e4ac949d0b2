"""Monte-Carlo experiments: correlation sweeps, PC recovery and bias/RMSE.

Every replicate draws from its own seed derived from ``(seed, grid index,
replicate index)``, and results are stored by index before aggregation, so
the thread count never changes a single output bit.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy import integrate, optimize, stats

from .errors import ConfigError
from .robust import MODES, marginal_scale_rows
from .sampling import GaussianSpec, RngSeed, Subordinator, sample_subordinator, sample_superstatistical
from .shape import METHODS, DataQualityWarning, estimate_shape
from .pca import fit_pca
from .logcorr import UNRELIABLE_RHO

KINDS = ("rho-sweep", "pc-recovery", "bias-rmse")
DEFAULT_RHOS = tuple(round(0.1 * k, 1) for k in range(1, 10))
# Scale-calibrated estimators return c^2 * Sigma, c being the marginal scale of sqrt(A) Z.
CALIBRATED = ("m1a", "m1b", "m1c", "m2", "m3")
_AUX_STREAM = 2**32  # keeps auxiliary Monte-Carlo draws apart from replicate streams


def sweep_sigma(rho):
    """The 2-D family ``[[16, 8 rho], [8 rho, 4]]`` whose correlation is ``rho``."""
    return np.array([[16.0, 8.0 * rho], [8.0 * rho, 4.0]])


def rdr_sigma():
    r = np.array([[1.0, 0.8], [0.8, 1.0]])
    return r @ np.diag([1.0, 0.4]) @ r


BIAS_SIGMA = np.array([[1.0, 0.9, 0.5], [0.9, 1.0, 0.2], [0.5, 0.2, 1.0]])


@dataclass
class ExperimentConfig:
    kind: str = "rho-sweep"
    subordinator: Subordinator = field(default_factory=lambda: Subordinator.stable(1.0))
    sigma: np.ndarray = None
    rhos: tuple = DEFAULT_RHOS
    n: int = 800
    n_runs: int = 200
    methods: tuple = ("m1c", "tyler", "empirical")
    mode: str = "ml"
    seed: int = 0
    out: str = None
    threads: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.n < 8:
            raise ConfigError(f"n must be at least 8, got {self.n}")
        if self.n_runs < 1:
            raise ConfigError(f"n_runs must be at least 1, got {self.n_runs}")
        self.methods = tuple(self.methods)
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {METHODS}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        self.rhos = tuple(float(r) for r in self.rhos)
        if self.kind == "rho-sweep" and self.sigma is None:
            if not self.rhos or any(not (0 < abs(r) < 1) for r in self.rhos):
                raise ConfigError("rho grid values must lie in (-1, 1) and be nonzero")
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if self.sigma.ndim != 2 or self.sigma.shape[0] != self.sigma.shape[1]:
                raise ConfigError("sigma must be a square matrix")

    def sigmas(self):
        """``[(label, Sigma)]`` for every grid point of this experiment."""
        if self.sigma is not None:
            return [(None, self.sigma)]
        if self.kind == "rho-sweep":
            return [(r, sweep_sigma(r)) for r in self.rhos]
        if self.kind == "pc-recovery":
            return [(None, rdr_sigma())]
        return [(None, BIAS_SIGMA)]


def _pool_map(fn, tasks, threads):
    if threads <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, tasks))


def _quiet_run(cfg, fn, tasks):
    # Per-replicate data-quality warnings would flood the console; callers
    # aggregate the diagnostics instead.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        return _pool_map(fn, tasks, cfg.threads)


def _log_resources(cfg, lut, log_moments):
    if "m2" not in cfg.methods:
        return lut, log_moments
    from .logcorr import build_log_lut, subordinator_log_moments

    if lut is None:
        lut = build_log_lut()
    if log_moments is None:
        log_moments = subordinator_log_moments(cfg.subordinator, rng=RngSeed(cfg.seed, _AUX_STREAM))
    return lut, log_moments


# ---------------------------------------------------------------------------
# correlation sweep


@dataclass(frozen=True)
class SweepRow:
    rho: float
    method: str
    rel_error_pct: float
    se_pct: float
    mean_abs_rel_error_pct: float
    mean_rho_hat: float
    clamped: int
    flagged_runs: int
    unreliable: bool
    n_runs: int


SWEEP_HEADER = ("rho", "method", "rel_error_pct", "se_pct", "mean_abs_rel_error_pct", "mean_rho_hat",
                "clamped", "flagged_runs", "unreliable", "n_runs")


@dataclass
class SweepResult:
    """Per-(rho, method) errors.

    ``rel_error_pct`` is the relative error of the replicate-averaged
    estimate, ``100 |mean(rho_hat) - rho| / rho``; ``mean_abs_rel_error_pct``
    averages the per-replicate errors instead.  ``flagged_runs`` counts
    replicates in which the estimator raised its low-correlation flag, and
    ``unreliable`` marks log-correlation rows with ``|rho| < 0.3``.
    ``estimates`` keeps the raw ``rho_hat`` array (grid x runs x methods).
    """

    rows: list
    estimates: np.ndarray

    def row(self, method, rho):
        for r in self.rows:
            if r.method == method and math.isclose(r.rho, rho):
                return r
        raise KeyError((method, rho))

    def error(self, method, rho):
        return self.row(method, rho).rel_error_pct

    def table(self):
        return [tuple(getattr(r, f) for f in SWEEP_HEADER) for r in self.rows]


def run_rho_sweep(cfg, lut=None, log_moments=None):
    methods = tuple(m for m in cfg.methods if m != "m3")
    grid = cfg.sigmas()
    if grid[0][1].shape[0] != 2:
        raise ConfigError("rho sweeps need a 2-D sigma")
    if not methods:
        raise ConfigError("method m3 is excluded for 2-D data; no methods left")
    if cfg.sigma is not None:
        s = cfg.sigma
        grid = [(s[0, 1] / math.sqrt(s[0, 0] * s[1, 1]), s)]
        if grid[0][0] == 0:
            raise ConfigError("relative error is undefined for a zero true correlation")
    lut, log_moments = _log_resources(cfg, lut, log_moments)
    specs = [GaussianSpec(s) for _, s in grid]
    root = RngSeed(cfg.seed)

    def replicate(task):
        g, run = task
        x = sample_superstatistical(specs[g], cfg.subordinator, cfg.n, root.child(g, run))
        out = np.empty((len(methods), 3))
        for k, m in enumerate(methods):
            est = estimate_shape(x, m, cfg.mode, lut=lut, log_moments=log_moments)
            out[k] = est.correlation(0, 1), est.diagnostics.get("clamped", 0), est.diagnostics.get("unreliable", 0)
        return out

    tasks = [(g, r) for g in range(len(grid)) for r in range(cfg.n_runs)]
    res = np.array(_quiet_run(cfg, replicate, tasks)).reshape(len(grid), cfg.n_runs, len(methods), 3)
    est, clamps, flags = res[..., 0], res[..., 1], res[..., 2]
    rows = []
    for g, (rho, _) in enumerate(grid):
        for k, m in enumerate(methods):
            vals = est[g, :, k]
            mean = math.fsum(vals) / cfg.n_runs
            sd = float(np.std(vals, ddof=1)) if cfg.n_runs > 1 else 0.0
            rel = np.abs(vals - rho) / abs(rho)
            rows.append(SweepRow(
                float(rho), m,
                100 * abs(mean - rho) / abs(rho),
                100 * sd / math.sqrt(cfg.n_runs) / abs(rho),
                100 * math.fsum(rel) / cfg.n_runs,
                mean,
                int(clamps[g, :, k].sum()),
                int(flags[g, :, k].sum()),
                m == "m2" and abs(rho) < UNRELIABLE_RHO,
                cfg.n_runs,
            ))
    for k, m in enumerate(methods):
        total = int(clamps[..., k].sum())
        if total > 0.05 * cfg.n_runs * len(grid):
            warnings.warn(f"{m}: {total} clamped correlation estimates across the sweep", DataQualityWarning,
                          stacklevel=2)
    return SweepResult(rows, est)


# ---------------------------------------------------------------------------
# principal-direction recovery


@dataclass
class PcRecoveryResult:
    methods: tuple
    cosines: np.ndarray  # runs x methods, absolute cosine with the true PC1

    def median(self, method):
        return float(np.median(self.cosines[:, self.methods.index(method)]))

    def summary(self):
        out = []
        for k, m in enumerate(self.methods):
            c = self.cosines[:, k]
            out.append((m, float(np.median(c)), math.fsum(c) / c.size, float(c.min()), float(np.quantile(c, 0.1))))
        return out

    def table(self):
        return [(r, m, float(self.cosines[r, k])) for r in range(self.cosines.shape[0])
                for k, m in enumerate(self.methods)]


PC_HEADER = ("run", "method", "abs_cosine")
PC_SUMMARY_HEADER = ("method", "median", "mean", "min", "q10")


def run_pc_recovery(cfg, lut=None, log_moments=None):
    (_, sigma), = cfg.sigmas()
    lam, vec = np.linalg.eigh(sigma)
    truth = vec[:, -1]
    spec = GaussianSpec(sigma)
    lut, log_moments = _log_resources(cfg, lut, log_moments)
    root = RngSeed(cfg.seed)

    def replicate(run):
        x = sample_superstatistical(spec, cfg.subordinator, cfg.n, root.child(0, run))
        out = []
        for m in cfg.methods:
            model = fit_pca(x, m, 1, cfg.mode, lut=lut, log_moments=log_moments)
            out.append(abs(float(model.components[:, 0] @ truth)))
        return out

    cos = np.array(_quiet_run(cfg, replicate, range(cfg.n_runs)), dtype=float)
    return PcRecoveryResult(cfg.methods, np.clip(cos, 0.0, 1.0))


# ---------------------------------------------------------------------------
# bias / RMSE of the full matrix


def marginal_scale_constant(sub, mode="ml", n_mc=10**6, rng=None):
    """Population marginal scale ``c`` of ``sqrt(A) Z`` with ``Z ~ N(0, 1)``.

    Estimators built from marginal scales return ``c^2 Sigma``; dividing by
    ``c^2`` puts them on the covariance scale of the latent Gaussian.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if sub.kind == "stable" and sub.alpha == 1.0:
        return math.sqrt(0.5)  # the marginal is exactly Cauchy(0, 1/sqrt(2))
    if sub.kind == "degenerate":
        if mode == "quantile":
            return math.sqrt(sub.a) * float(stats.norm.ppf(0.75))

        def score(g):
            val, _ = integrate.quad(lambda z: z * z / (g * g + z * z) * stats.norm.pdf(z), -np.inf, np.inf)
            return val - 0.5

        return math.sqrt(sub.a) * optimize.brentq(score, 0.1, 10.0, xtol=1e-14)
    rng = rng if rng is not None else RngSeed(0, _AUX_STREAM)
    gen = rng.generator()
    a = sample_subordinator(sub, n_mc, gen)
    z = gen.standard_normal(n_mc)
    return float(marginal_scale_rows((np.sqrt(a) * z)[None, :], mode)[0])


@dataclass
class BiasRmseResult:
    method: str
    bias: np.ndarray
    rmse: np.ndarray
    scale_constant: float

    def table(self):
        d = self.bias.shape[0]
        return [(i, j, float(self.bias[i, j]), float(self.rmse[i, j])) for i in range(d) for j in range(d)]


BIAS_HEADER = ("i", "j", "bias", "rmse")


def run_bias_rmse(cfg, lut=None, log_moments=None, scale_constant=None):
    """Entrywise bias and RMSE of ``Sigma_hat`` for the first configured method."""
    (_, sigma), = cfg.sigmas()
    method = cfg.methods[0]
    if method == "m3" and sigma.shape[0] < 4:
        raise ConfigError("method m3 needs dimension >= 4")
    spec = GaussianSpec(sigma)
    lut, log_moments = _log_resources(cfg, lut, log_moments)
    c2 = 1.0
    if method in CALIBRATED:
        c = scale_constant if scale_constant is not None else marginal_scale_constant(
            cfg.subordinator, cfg.mode, rng=RngSeed(cfg.seed, _AUX_STREAM + 1))
        c2 = c * c
    root = RngSeed(cfg.seed)

    def replicate(run):
        x = sample_superstatistical(spec, cfg.subordinator, cfg.n, root.child(0, run))
        return np.asarray(estimate_shape(x, method, cfg.mode, lut=lut, log_moments=log_moments).matrix) / c2

    est = np.array(_quiet_run(cfg, replicate, range(cfg.n_runs)))
    err = est - sigma
    bias = err.mean(axis=0)
    rmse = np.sqrt((err * err).mean(axis=0))
    return BiasRmseResult(method, bias, rmse, math.sqrt(c2))
