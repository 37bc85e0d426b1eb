"""Cubic B-spline smoothing surfaces for subpixel sampling.

Every continuous lookup in this package evaluates the C^2 surface whose
coefficients are the raw pixel values (no prefilter):

    S(x, y) = sum_ij M[j, i] * B3(x - i) * B3(y - j)

with B3 the cubic B-spline. At integer pixels the surface equals the
separable [1,4,1]/6 filter of the map, so reference values on the pixel
grid and warped samples live on the same smooth function. That makes
in-surface gradients exact: analytic Jacobians of any quantity sampled
through the surface agree with central finite differences to second
order, with no interpolation-cell seams.

Samples are valid on [1, W-2) x [1, H-2) so the 4x4 stencil stays in
bounds; the same box is used for integer-pixel masks.
"""

from __future__ import annotations

import numpy as np


def _basis(f):
    # f in [0,1): weights and d/dx weights for taps at floor-1 .. floor+2
    f2 = f * f
    f3 = f2 * f
    w = np.stack(
        [
            (1.0 - 3.0 * f + 3.0 * f2 - f3) / 6.0,
            (4.0 - 6.0 * f2 + 3.0 * f3) / 6.0,
            (1.0 + 3.0 * f + 3.0 * f2 - 3.0 * f3) / 6.0,
            f3 / 6.0,
        ],
        axis=-1,
    )
    dw = np.stack(
        [
            -0.5 * (1.0 - f) ** 2,
            1.5 * f2 - 2.0 * f,
            0.5 + f - 1.5 * f2,
            0.5 * f2,
        ],
        axis=-1,
    )
    return w, dw


def valid_box(x, y, width, height):
    """Mask of sample points whose 4x4 stencil fits inside the map."""
    return (x >= 1.0) & (x < width - 2.0) & (y >= 1.0) & (y < height - 2.0)


def surface_taps(x, y, width, height):
    """16-tap stencils of the smoothing surface at points (x, y).

    Returns (idx, w, wx, wy, valid): flat pixel indices (N, 16), value
    weights, and x/y derivative weights, all zeroed (indices clamped)
    where the point falls outside the valid box.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    valid = valid_box(x, y, width, height)
    xs = np.where(valid, x, 2.0)
    ys = np.where(valid, y, 2.0)
    ix = np.floor(xs).astype(np.int64)
    iy = np.floor(ys).astype(np.int64)
    wx_v, wx_d = _basis(xs - ix)
    wy_v, wy_d = _basis(ys - iy)
    cols = ix[:, None] + np.arange(-1, 3)
    rows = iy[:, None] + np.arange(-1, 3)
    idx = (rows[:, :, None] * width + cols[:, None, :]).reshape(-1, 16)
    w = (wy_v[:, :, None] * wx_v[:, None, :]).reshape(-1, 16)
    wx = (wy_v[:, :, None] * wx_d[:, None, :]).reshape(-1, 16)
    wy = (wy_d[:, :, None] * wx_v[:, None, :]).reshape(-1, 16)
    on = valid.astype(np.float64)[:, None]
    return idx, w * on, wx * on, wy * on, valid


def sample_surface(img, x, y):
    """Surface value and gradient at continuous points.

    Returns (val, gx, gy, valid); entries outside the valid box are 0.
    """
    h, w = img.shape
    idx, tw, twx, twy, valid = surface_taps(x, y, w, h)
    flat = np.asarray(img, dtype=np.float64).reshape(-1)
    g = flat[idx]
    return (g * tw).sum(axis=1), (g * twx).sum(axis=1), (g * twy).sum(axis=1), valid


def smooth_grid(img):
    """Surface values on the pixel grid: separable [1,4,1]/6 filter.

    Interior values match sample_surface at the same integer coordinates
    exactly; the one-pixel border uses edge replication and lies outside
    the valid box anyway. Trailing axes (e.g. a code dimension) pass
    through untouched.
    """
    img = np.asarray(img, dtype=np.float64)
    k0, k1 = 1.0 / 6.0, 4.0 / 6.0
    pw = ((1, 1), (1, 1)) + tuple((0, 0) for _ in img.shape[2:])
    pad = np.pad(img, pw, mode="edge")
    tmp = k0 * pad[:-2] + k1 * pad[1:-1] + k0 * pad[2:]
    return k0 * tmp[:, :-2] + k1 * tmp[:, 1:-1] + k0 * tmp[:, 2:]


def smooth_grid_gradients(img):
    """Surface x/y gradients on the pixel grid (exact on the interior)."""
    img = np.asarray(img, dtype=np.float64)
    k0, k1 = 1.0 / 6.0, 4.0 / 6.0
    pad = np.pad(img, 1, mode="edge")
    by = k0 * pad[:-2, 1:-1] + k1 * pad[1:-1, 1:-1] + k0 * pad[2:, 1:-1]
    bx = k0 * pad[1:-1, :-2] + k1 * pad[1:-1, 1:-1] + k0 * pad[1:-1, 2:]
    byp = np.pad(by, ((0, 0), (1, 1)), mode="edge")
    bxp = np.pad(bx, ((1, 1), (0, 0)), mode="edge")
    gx = 0.5 * (byp[:, 2:] - byp[:, :-2])
    gy = 0.5 * (bxp[2:, :] - bxp[:-2, :])
    return gx, gy
