"""Linear proximity bases.

Columns are images flattened row-major to (width*height,), matching the
decoder artifact's jacobian layout. Three families: a 2D orthonormal
DCT ordered coarse to fine, a grid of Gaussian bumps, and PCA over a
batch of sample maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BasisTooLarge(Exception):
    """code_size exceeds what the image (or sample batch) can support."""


@dataclass(frozen=True)
class BasisSpec:
    kind: str = "dct2d"  # dct2d | gaussian_rbf | pca
    code_size: int = 128
    smoothness: float = 1.0


def _dct_axis(n, k):
    i = np.arange(n)
    scale = np.sqrt((1.0 if k == 0 else 2.0) / n)
    return scale * np.cos(np.pi * (2 * i + 1) * k / (2.0 * n))


def dct2d_basis(width, height, code_size, smoothness=0.0):
    """Lowest-frequency code_size terms of the orthonormal 2D DCT.

    smoothness > 0 shrinks high-frequency columns by
    1/(1 + smoothness*(kx^2 + ky^2)), so random codes decode to smooth
    fields; at smoothness 0 the columns are exactly orthonormal.
    """
    if code_size > width * height:
        raise BasisTooLarge(
            "code_size %d > %d pixels" % (code_size, width * height)
        )
    pairs = sorted(
        ((kx + ky, ky, kx) for ky in range(height) for kx in range(width))
    )[:code_size]
    cols = np.empty((height * width, code_size))
    for j, (_, ky, kx) in enumerate(pairs):
        img = np.outer(_dct_axis(height, ky), _dct_axis(width, kx))
        cols[:, j] = img.reshape(-1) / (1.0 + smoothness * (kx**2 + ky**2))
    return cols


def gaussian_rbf_basis(width, height, code_size, smoothness=1.0):
    """Unit-norm Gaussian bumps on a regular grid; width scales with
    smoothness and the grid spacing."""
    if code_size > width * height:
        raise BasisTooLarge(
            "code_size %d > %d pixels" % (code_size, width * height)
        )
    gx = int(np.ceil(np.sqrt(code_size * width / height)))
    gy = int(np.ceil(code_size / gx))
    cxs = (np.arange(gx) + 0.5) * width / gx
    cys = (np.arange(gy) + 0.5) * height / gy
    sigma = smoothness * max(width / gx, height / gy)
    ys, xs = np.mgrid[0:height, 0:width]
    cols = np.empty((height * width, code_size))
    for j in range(code_size):
        cx, cy = cxs[j % gx], cys[j // gx]
        bump = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma**2))
        cols[:, j] = bump.reshape(-1) / np.linalg.norm(bump)
    return cols


def pca_basis(samples, code_size):
    """Principal components of a (n_samples, n_pixels) batch.

    Returns (columns, explained_variance_ratio); the ratio covers the
    full spectrum so callers can check coverage at any truncation.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n, npix = samples.shape
    if code_size > min(n, npix):
        raise BasisTooLarge(
            "code_size %d > min(%d samples, %d pixels)" % (code_size, n, npix)
        )
    centered = samples - samples.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    ratio = s**2 / np.sum(s**2)
    return vt[:code_size].T.copy(), ratio


def edge_modulation(image, strength=1.0):
    """Per-pixel attenuation in (0, 1]: 1 on flat regions, small across
    strong intensity edges, mirroring how learned codes stop at object
    boundaries."""
    gy, gx = np.gradient(np.asarray(image, dtype=np.float64))
    mag = np.hypot(gx, gy)
    scale = mag.mean() + 1e-12
    return np.exp(-strength * mag / scale).reshape(-1)


def build_basis(spec: BasisSpec, width, height):
    if spec.kind == "dct2d":
        return dct2d_basis(width, height, spec.code_size, spec.smoothness)
    if spec.kind == "gaussian_rbf":
        return gaussian_rbf_basis(width, height, spec.code_size, spec.smoothness)
    if spec.kind == "pca":
        raise ValueError("pca columns come from pca_basis(samples, code_size)")
    raise ValueError("unknown basis kind %r" % spec.kind)
