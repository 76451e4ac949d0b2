"""Samplers for the superstatistical model ``X = sqrt(A) * G``.

``A`` is a positive random scale (the subordinator) and ``G`` a zero-mean
Gaussian vector with covariance ``sigma``.  Stable variates use the
Chambers-Mallows-Stuck transform in the 1-parameterization (Nolan's S1), so
``S(1/2, 1, c, 0)`` is the Levy law ``c / Z**2``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import NotPSDError, NumericalError, ParameterDomainError

__all__ = [
    "RngSeed",
    "StableParams",
    "Subordinator",
    "GaussianSpec",
    "sample_standard_stable",
    "sample_subordinator",
    "sample_superstatistical",
    "cholesky",
]

_U64 = 2**64


@dataclass(frozen=True)
class RngSeed:
    """Reproducible random stream identified by ``(seed, stream)``.

    Every call that takes an ``RngSeed`` builds a fresh generator from it, so
    identical seeds give bitwise identical draws no matter which thread runs
    the call or in which order.
    """

    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < _U64 and 0 <= self.stream < _U64):
            raise ParameterDomainError("seed and stream must be unsigned 64-bit integers")

    def generator(self):
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))

    def child(self, *keys):
        """Derive a sub-stream; used to give replicates independent seeds."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *keys))
        state = ss.generate_state(2, dtype=np.uint64)
        return RngSeed(int(state[0]), int(state[1]))


def _as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngSeed):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return RngSeed(int(rng or 0)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


@dataclass(frozen=True)
class StableParams:
    alpha: float
    beta: float = 0.0
    gamma: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise ParameterDomainError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not (-1.0 <= self.beta <= 1.0):
            raise ParameterDomainError(f"beta must lie in [-1, 1], got {self.beta}")
        if not self.gamma > 0.0:
            raise ParameterDomainError(f"gamma must be positive, got {self.gamma}")
        if not math.isfinite(self.delta):
            raise ParameterDomainError("delta must be finite")


def sample_standard_stable(params, n, rng):
    """Draw ``n`` i.i.d. variates from ``S(alpha, beta, gamma, delta)`` (S1).

    >>> x = sample_standard_stable(StableParams(2.0), 5, RngSeed(1))
    >>> x.shape
    (5,)
    """
    if n < 1:
        raise ParameterDomainError("n must be at least 1")
    gen = _as_generator(rng)
    a, b = params.alpha, params.beta
    v = gen.uniform(-np.pi / 2, np.pi / 2, size=n)
    w = gen.standard_exponential(size=n)
    if a == 1.0:
        half_pi_bv = np.pi / 2 + b * v
        x = (2 / np.pi) * (half_pi_bv * np.tan(v) - b * np.log((np.pi / 2) * w * np.cos(v) / half_pi_bv))
        return params.gamma * x + (2 / np.pi) * b * params.gamma * math.log(params.gamma) + params.delta
    t = b * math.tan(np.pi * a / 2)
    shift = math.atan(t) / a
    scale = (1 + t * t) ** (1 / (2 * a))
    av = a * (v + shift)
    x = scale * np.sin(av) / np.cos(v) ** (1 / a) * (np.cos(v - av) / w) ** ((1 - a) / a)
    return params.gamma * x + params.delta


@dataclass(frozen=True)
class Subordinator:
    """Positive random scale ``A``.

    Use the constructors :meth:`stable`, :meth:`student` and
    :meth:`degenerate` rather than building instances directly.
    """

    kind: str
    alpha: float = None
    nu: float = None
    a: float = None

    def __post_init__(self):
        if self.kind == "stable":
            if self.alpha is None or not (0.0 < self.alpha < 2.0):
                raise ParameterDomainError(f"stable subordinator needs alpha in (0, 2), got {self.alpha}")
        elif self.kind == "student":
            if self.nu is None or not self.nu > 0:
                raise ParameterDomainError(f"student subordinator needs nu > 0, got {self.nu}")
        elif self.kind == "degenerate":
            if self.a is None or not self.a > 0:
                raise ParameterDomainError(f"degenerate subordinator needs a > 0, got {self.a}")
        else:
            raise ParameterDomainError(f"unknown subordinator kind {self.kind!r}")

    @classmethod
    def stable(cls, alpha):
        return cls("stable", alpha=float(alpha))

    @classmethod
    def student(cls, nu):
        return cls("student", nu=float(nu))

    @classmethod
    def degenerate(cls, a=1.0):
        return cls("degenerate", a=float(a))

    @property
    def stable_params(self):
        """Totally skewed law ``S(alpha/2, 1, cos(pi*alpha/4)**(2/alpha), 0)``."""
        if self.kind != "stable":
            raise ParameterDomainError("only stable subordinators have stable parameters")
        a = self.alpha
        return StableParams(a / 2, 1.0, math.cos(math.pi * a / 4) ** (2 / a), 0.0)

    def describe(self):
        if self.kind == "stable":
            return f"stable(alpha={self.alpha:g})"
        if self.kind == "student":
            return f"student(nu={self.nu:g})"
        return f"degenerate(a={self.a:g})"


def sample_subordinator(sub, n, rng):
    if n < 1:
        raise ParameterDomainError("n must be at least 1")
    if sub.kind == "degenerate":
        return np.full(n, sub.a)
    gen = _as_generator(rng)
    if sub.kind == "student":
        out = sub.nu / gen.chisquare(sub.nu, size=n)
    else:
        out = sample_standard_stable(sub.stable_params, n, gen)
    if not np.all(out > 0):
        raise NumericalError(f"{sub.describe()} produced a non-positive draw")
    return out


def cholesky(sigma, tol=1e-10):
    """Lower-triangular ``L`` with ``L @ L.T == sigma`` for symmetric PSD input.

    Rank-deficient matrices are factored by the semidefinite outer-product
    algorithm: a column whose pivot falls below round-off is zeroed.

    >>> cholesky(np.array([[1.0, 1.0], [1.0, 1.0]]))
    array([[1., 0.],
           [1., 0.]])
    """
    s = np.array(sigma, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ParameterDomainError(f"sigma must be square, got shape {s.shape}")
    scale = np.abs(s).max() if s.size else 0.0
    if not np.allclose(s, s.T, rtol=0, atol=1e-12 * max(scale, 1e-300)):
        raise ParameterDomainError("sigma is not symmetric")
    s = (s + s.T) / 2
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        pass
    lam = np.linalg.eigvalsh(s)
    lam_max = max(lam[-1], 0.0)
    if lam[0] < -tol * lam_max or lam_max == 0.0 and lam[0] < 0:
        raise NotPSDError(f"matrix is indefinite (min eigenvalue {lam[0]:.3e}, max {lam_max:.3e})")
    d = s.shape[0]
    work = s.copy()
    out = np.zeros_like(s)
    floor = tol * max(lam_max, 1e-300) * d
    for k in range(d):
        pivot = work[k, k]
        if pivot <= floor:
            continue
        col = work[k:, k] / math.sqrt(pivot)
        out[k:, k] = col
        work[k:, k:] -= np.outer(col, col)
    return out


@dataclass
class GaussianSpec:
    sigma: np.ndarray
    chol: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.sigma = np.array(self.sigma, dtype=float)
        if self.chol is None:
            self.chol = cholesky(self.sigma)

    @property
    def dim(self):
        return self.sigma.shape[0]


def sample_superstatistical(spec, sub, n, rng):
    """Draw a ``d x n`` matrix whose column ``j`` is ``sqrt(A_j) L z_j``.

    ``A_j`` is drawn independently for every column.
    """
    if n < 1:
        raise ParameterDomainError("n must be at least 1")
    if not isinstance(spec, GaussianSpec):
        spec = GaussianSpec(spec)
    gen = _as_generator(rng)
    z = gen.standard_normal((spec.dim, n))
    a = sample_subordinator(sub, n, gen)
    return (spec.chol @ z) * np.sqrt(a)
