"""PCA on an estimated shape matrix, projection and the logarithmic cost.

For superstatistical data the log-cost ``E[ln(1 + |x - W M^T x|^2)]`` is
minimized by ``M = W`` (orthogonal projection) and, over ``W``, by the top
eigenvectors of the latent covariance, so heavy-tailed PCA is ordinary PCA
applied to a robust shape estimate.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .robust import location_vector
from .shape import estimate_shape

JACOBI_MAX_DIM = 64
ORTHO_TOL = 1e-8


def _round_robin(d):
    """Rounds of disjoint index pairs covering every pair exactly once."""
    players = list(range(d)) if d % 2 == 0 else list(range(d)) + [-1]
    k = len(players)
    rounds = []
    for _ in range(k - 1):
        pairs = [(players[i], players[k - 1 - i]) for i in range(k // 2)]
        pairs = [(min(p), max(p)) for p in pairs if -1 not in p]
        rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(s, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Disjoint rotations of each round-robin round are applied together.
    Returns unsorted ``(eigenvalues, eigenvectors)``.
    """
    a = np.array(s, dtype=float)
    d = a.shape[0]
    v = np.eye(d)
    norm = np.linalg.norm(a)
    if d < 2 or norm == 0:
        return np.diag(a).copy(), v
    rounds = _round_robin(d)
    for _ in range(max_sweeps):
        off = a - np.diag(np.diag(a))
        if np.linalg.norm(off) < tol * norm:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > 1e-30 * norm
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            tau = (a[q, q] - a[p, p]) / (2 * apq)
            t = np.sign(tau) / (np.abs(tau) + np.sqrt(1 + tau * tau))
            t[tau == 0] = 1.0
            c = 1 / np.sqrt(1 + t * t)
            sn = t * c
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - sn[:, None] * aq
            a[q, :] = sn[:, None] * ap + c[:, None] * aq
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = ap * c - aq * sn
            a[:, q] = ap * sn + aq * c
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * c - vq * sn
            v[:, q] = vp * sn + vq * c
    else:
        raise NumericalError(f"Jacobi did not converge in {max_sweeps} sweeps")
    return np.diag(a).copy(), v


def _fix_signs(vec):
    idx = np.argmax(np.abs(vec), axis=0)
    signs = np.sign(vec[idx, np.arange(vec.shape[1])])
    signs[signs == 0] = 1
    return vec * signs


def _order(lam, vec, tie_tol=1e-8):
    order = sorted(range(lam.size), key=lambda k: -lam[k])
    scale = max(abs(lam).max(), 1e-300)
    out = []
    i = 0
    while i < len(order):
        j = i + 1
        while j < len(order) and abs(lam[order[j]] - lam[order[i]]) <= tie_tol * scale:
            j += 1
        group = order[i:j]
        group.sort(key=lambda k: tuple(-vec[:, k]))
        out.extend(group)
        i = j
    return np.array(out, dtype=int)


def sym_eigen(s, solver="auto"):
    """Eigenvalues (descending) and eigenvectors of a symmetric matrix.

    ``solver`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    dimension 64).  Each eigenvector's largest-magnitude entry is positive.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {s.shape}")
    scale = max(np.abs(s).max(), 1e-300)
    if not np.allclose(s, s.T, rtol=0, atol=1e-10 * scale):
        raise ConfigError("matrix is not symmetric")
    s = (s + s.T) / 2
    if solver == "auto":
        solver = "jacobi" if s.shape[0] <= JACOBI_MAX_DIM else "lapack"
    if solver == "jacobi":
        lam, vec = jacobi_eigh(s)
    elif solver == "lapack":
        lam, vec = np.linalg.eigh(s)
    else:
        raise ConfigError(f"unknown solver {solver!r}")
    vec = _fix_signs(vec)
    order = _order(lam, vec)
    return lam[order], vec[:, order]


@dataclass
class PcaModel:
    components: np.ndarray
    eigenvalues: np.ndarray
    location: np.ndarray
    method: str = ""

    def __post_init__(self):
        gram = self.components.T @ self.components
        if not np.allclose(gram, np.eye(gram.shape[0]), rtol=0, atol=ORTHO_TOL):
            raise NumericalError("components are not orthonormal")

    @property
    def dim(self):
        return self.components.shape[0]

    @property
    def rank(self):
        return self.components.shape[1]


def fit_pca(x, method="m1c", m=1, mode="ml", center=None, lut=None, log_moments=None, solver="auto"):
    """Top-``m`` principal directions of a robust (or classical) shape estimate.

    Heavy-tailed methods centre on the per-row location estimate; the
    ``empirical`` baseline centres on the row mean, as classical PCA does.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    if not (1 <= m <= d):
        raise ConfigError(f"m must lie in [1, {d}], got {m}")
    if center is None:
        center = "mean" if method == "empirical" else "location"
    if center == "location":
        loc = location_vector(x, mode)
    elif center == "mean":
        loc = x.mean(axis=1)
    elif center == "none":
        loc = np.zeros(d)
    else:
        raise ConfigError(f"unknown centering {center!r}")
    est = estimate_shape(x - loc[:, None], method, mode, lut=lut, log_moments=log_moments)
    lam, vec = sym_eigen(est.matrix, solver)
    return PcaModel(vec[:, :m], np.clip(lam[:m], 0, None), loc, method)


def fit_heavy_pca(x, method="m1c", m=1, mode="ml", **kwargs):
    return fit_pca(x, method, m, mode, **kwargs)


def fit_classical_pca(x, m=1):
    return fit_pca(x, "empirical", m, center="mean")


def project_reconstruct(x, model):
    """``location + W W^T (x - location)`` column by column."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != model.dim:
        raise ConfigError(f"data dimension {x.shape[0]} does not match model dimension {model.dim}")
    w = model.components
    loc = model.location[:, None]
    return loc + w @ (w.T @ (x - loc))


@dataclass(frozen=True)
class LogCostReport:
    value: float
    n_used: int


def log_cost(x, w, m=None):
    """Empirical mean of ``ln(1 + |x_j - W M^T x_j|^2)``; ``M`` defaults to ``W``."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    m = w if m is None else np.asarray(m, dtype=float)
    if w.ndim != 2 or w.shape[0] != x.shape[0] or m.shape != w.shape:
        raise ConfigError("W and M must both be d x m with d matching the data")
    if not np.allclose(w.T @ w, np.eye(w.shape[1]), rtol=0, atol=ORTHO_TOL):
        raise ConfigError("W must have orthonormal columns")
    return LogCostReport(float(np.mean(np.log1p(residual_norms_sq(x, w, m)))), x.shape[1])


def residual_norms_sq(x, w, m):
    r = x - w @ (m.T @ x)
    return np.einsum("ij,ij->j", r, r)


def cosine_similarity(u, v):
    """``u.v / (|u| |v|)``; compare principal directions with ``abs()``.

    >>> round(cosine_similarity([1, 1], [1, 0]), 6)
    0.707107
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ConfigError("cosine similarity of a zero vector is undefined")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def subspace_cosine(u, v):
    """Cosine of the largest principal angle between two column spaces."""
    qu, _ = np.linalg.qr(np.atleast_2d(np.asarray(u, dtype=float).T).T)
    qv, _ = np.linalg.qr(np.atleast_2d(np.asarray(v, dtype=float).T).T)
    return float(np.linalg.svd(qu.T @ qv, compute_uv=False).min())


def random_orthonormal(d, m, rng):
    """Haar-distributed ``d x m`` matrix with orthonormal columns."""
    q, r = np.linalg.qr(rng.standard_normal((d, m)))
    return q * np.sign(np.diag(r))
