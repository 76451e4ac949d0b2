"""Image-stack denoising with a rank-k principal subspace.

An image stack is ``k`` images of ``h x w`` pixels stored as a ``k x (h*w)``
matrix (row-major pixels, values nominally in ``[0, 1]``).  For fitting, the
stack is transposed so that pixels are dimensions and images are samples.
"""

from dataclasses import dataclass
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .pca import fit_pca, project_reconstruct
from .sampling import RngSeed, Subordinator, _as_generator, sample_subordinator

# Noise covariance presets c * I; pixels are assumed to lie in [0, 1].
NOISE_PRESETS = {"digits": 10.0, "frames": 0.02}


@dataclass
class ImageStack:
    pixels: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        self.pixels = np.atleast_2d(np.asarray(self.pixels, dtype=float))
        if self.pixels.shape[1] != self.height * self.width:
            raise ConfigError(f"images have {self.pixels.shape[1]} pixels, expected {self.height}x{self.width}")

    @property
    def count(self):
        return self.pixels.shape[0]

    def image(self, i):
        return self.pixels[i].reshape(self.height, self.width)

    @classmethod
    def from_images(cls, images):
        images = [np.asarray(im, dtype=float) for im in images]
        if not images:
            raise ConfigError("empty image list")
        shapes = {im.shape for im in images}
        if len(shapes) != 1:
            raise ConfigError(f"mismatched image sizes: {sorted(shapes)}")
        h, w = images[0].shape
        return cls(np.stack([im.ravel() for im in images]), h, w)


def _blob(yy, xx, cy, cx, r, width):
    return np.exp(-((np.hypot(yy - cy, xx - cx) - r) / width) ** 2)


def synthetic_digit_stack(count=40, size=28, seed=0):
    """Deterministic stack of blob images spanning a 4-dimensional space.

    Each image mixes four fixed templates (a ring, two stacked rings, a bar
    and a disc) with random nonnegative weights, then is scaled into
    ``[0, 1]``.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    c = (size - 1) / 2
    u = size / 28
    templates = np.stack([
        _blob(yy, xx, c, c, 8 * u, 1.6 * u),
        np.maximum(_blob(yy, xx, c - 5.5 * u, c, 4.5 * u, 1.4 * u), _blob(yy, xx, c + 5.5 * u, c, 4.5 * u, 1.4 * u)),
        np.exp(-((xx - c) / (1.8 * u)) ** 2) * (np.abs(yy - c) < 10 * u),
        np.exp(-(np.hypot(yy - c, xx - c) / (4 * u)) ** 2),
    ]).reshape(4, -1)
    gen = RngSeed(seed).generator()
    weights = gen.uniform(0.0, 1.0, size=(count, 4))
    weights[np.arange(count), np.arange(count) % 4] += 1.0
    pixels = weights @ templates
    pixels /= pixels.max()
    return ImageStack(pixels, size, size)


def add_noise(stack, sub, scale, rng):
    """Add ``sqrt(A_i) * N(0, scale * I)`` to every image ``i`` independently."""
    if scale < 0:
        raise ConfigError("noise scale must be nonnegative")
    if scale == 0:
        return ImageStack(stack.pixels.copy(), stack.height, stack.width)
    gen = _as_generator(rng)
    g = gen.standard_normal(stack.pixels.shape)
    a = sample_subordinator(sub, stack.count, gen)
    noisy = stack.pixels + math.sqrt(scale) * np.sqrt(a)[:, None] * g
    return ImageStack(noisy, stack.height, stack.width)


def relative_error(estimate, reference):
    return float(np.linalg.norm(estimate.pixels - reference.pixels) / np.linalg.norm(reference.pixels))


def psnr(estimate, reference, peak=1.0):
    """Per-image PSNR in dB; ``inf`` for an exact match."""
    mse = np.mean((estimate.pixels - reference.pixels) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        return 10 * np.log10(peak * peak / mse)


def reconstruct(noisy, method="m1c", k=10, mode="ml", **kwargs):
    """Rank-``k`` reconstruction of every image from a model fit on the stack itself."""
    if noisy.count < 8:
        raise ConfigError(f"need at least 8 images, got {noisy.count}")
    if method == "m3" and noisy.pixels.shape[1] < 4:
        raise ConfigError("method m3 needs at least 4 pixels")
    x = noisy.pixels.T
    model = fit_pca(x, method, k, mode, **kwargs)
    return ImageStack(project_reconstruct(x, model).T, noisy.height, noisy.width), model


@dataclass
class DenoiseResult:
    clean: ImageStack
    noisy: ImageStack
    reconstructed: ImageStack
    method: str
    rel_error: float
    psnr: np.ndarray


def denoise(stack, noise=None, scale=NOISE_PRESETS["digits"], method="m1c", k=10, mode="ml", rng=None):
    """Corrupt ``stack`` with superstatistical noise and reconstruct it.

    ``noise`` is a :class:`Subordinator` (default Cauchy-type, stable
    ``alpha=1``).  Metrics are measured against the clean stack.
    """
    noise = noise if noise is not None else Subordinator.stable(1.0)
    noisy = add_noise(stack, noise, scale, rng if rng is not None else RngSeed(0))
    rec, _ = reconstruct(noisy, method, k, mode)
    return DenoiseResult(stack, noisy, rec, method, relative_error(rec, stack), psnr(rec, stack))


def compare(stack, noise, scale, k=10, mode="ml", method="m1c", rng=None):
    """Heavy-tailed vs classical reconstruction on one shared noisy stack."""
    noisy = add_noise(stack, noise, scale, rng if rng is not None else RngSeed(0))
    out = {}
    for name in (method, "empirical"):
        rec, _ = reconstruct(noisy, name, k, mode)
        out[name] = DenoiseResult(stack, noisy, rec, name, relative_error(rec, stack), psnr(rec, stack))
    return out


def write_stack_pgms(directory, stack, prefix, limit=None):
    from .io import write_pgm

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(stack.count if limit is None else min(limit, stack.count)):
        write_pgm(d / f"{prefix}_{i:03d}.pgm", stack.image(i))


DENOISE_HEADER = ("run", "method", "rel_error", "mean_psnr_db")


def run_denoise(stack, noise, scale, runs=1, seed=0, method="m1c", k=10, mode="ml", threads=1):
    """Repeat :func:`compare` over ``runs`` seeds.

    Returns ``(rows, first)`` where ``rows`` follow :data:`DENOISE_HEADER`
    and ``first`` holds the results of replicate 0 for image output.
    """
    from .experiments import _pool_map

    if runs < 1:
        raise ConfigError("runs must be at least 1")
    root = RngSeed(seed)
    results = _pool_map(lambda r: compare(stack, noise, scale, k, mode, method, root.child(0, r)),
                        range(runs), threads)
    rows = []
    for r, res in enumerate(results):
        for name, out in res.items():
            rows.append((r, name, out.rel_error, float(np.mean(out.psnr))))
    return rows, results[0]
