"""Fit linear decoders to depth.

The artifact stores an affine map code -> proximity per pyramid level:
prox ~ mean_zero + jacobian @ c. Two regimes:

* fixture mode: the true depth is known exactly. mean_zero is the true
  proximity plus a controlled bias drawn from the basis span (plus a
  small rough floor), so zero-code prediction is measurably wrong and
  a recoverable ground-truth code exists. The least-squares code and
  its residual are recorded for downstream assertions.
* data mode: depth is a measurement (possibly with holes). mean_zero is
  a heavily smoothed proximity prior and the code is fit to what the
  prior misses, with either a weighted L2 objective or a Laplace
  negative log-likelihood (sum |r|/b + log b) minimized by IRLS.

Uncertainty is a heuristic in both regimes: larger where proximity
changes fast, i.e. near depth discontinuities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .artifact import DecoderData, box_down, pyramid_levels
from .basis import BasisSpec, build_basis, edge_modulation

PROX_FLOOR = 1e-3  # keep stored means strictly inside (0, 1]


def depth_to_proximity(depth, a):
    return a / (np.asarray(depth, dtype=np.float64) + a)


def _box3(img, passes=1):
    out = np.asarray(img, dtype=np.float64)
    for _ in range(passes):
        p = np.pad(out, 1, mode="edge")
        out = (
            p[:-2, :-2] + p[:-2, 1:-1] + p[:-2, 2:]
            + p[1:-1, :-2] + p[1:-1, 1:-1] + p[1:-1, 2:]
            + p[2:, :-2] + p[2:, 1:-1] + p[2:, 2:]
        ) / 9.0
    return out


def uncertainty_map(prox, b0=0.05, b1=6.0):
    """Laplace scale b, larger near depth discontinuities."""
    gy, gx = np.gradient(np.asarray(prox, dtype=np.float64))
    return b0 + b1 * _box3(np.hypot(gx, gy), passes=2)


@dataclass
class FitInfo:
    code: np.ndarray  # recorded ground-truth / best-fit code
    rms: float  # proximity residual of `code` against the target
    objective: str


def _laplace_irls(phi, r, b, iters=15, eps=1e-6):
    """argmin_c sum |r - phi c| / b by iteratively reweighted least squares."""
    w = 1.0 / b
    c = np.linalg.lstsq(phi * w[:, None], r * w, rcond=None)[0]
    for _ in range(iters):
        res = np.abs(r - phi @ c)
        w = 1.0 / (b * np.maximum(res, eps))
        c = np.linalg.lstsq(phi * np.sqrt(w)[:, None], r * np.sqrt(w), rcond=None)[0]
    return c


def fit_linear_decoder(image, depth, basis: BasisSpec, proximity_a=2.0, *,
                       mode="fixture", rng=None, bias_rms=0.03,
                       rough_rms=0.002, objective="l2", edge_strength=1.0,
                       valid=None, columns=None, source_id=""):
    """Build a decoder artifact for one frame; returns (DecoderData, FitInfo).

    image and depth are full-resolution (H, W) arrays; depth in metres.
    In fixture mode `rng` drives the bias draw and the recorded code is
    the least-squares recovery of it. In data mode `valid` masks usable
    depth pixels and `objective` picks l2 or laplace fitting. `columns`
    overrides the analytic basis (pca columns come from a sample batch
    the single-frame fit cannot see).
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    prox = depth_to_proximity(depth, proximity_a)
    if columns is None:
        columns = build_basis(basis, w, h)
    phi = columns * edge_modulation(image, edge_strength)[:, None]
    b = uncertainty_map(prox)

    if mode == "fixture":
        if rng is None:
            rng = np.random.default_rng(0)
        c_true = rng.standard_normal(basis.code_size)
        span_bias = (phi @ c_true).reshape(h, w)
        c_true *= bias_rms / max(np.sqrt(np.mean(span_bias**2)), 1e-12)
        rough = _box3(rng.standard_normal((h, w)), passes=1)
        rough *= rough_rms / max(np.sqrt(np.mean(rough**2)), 1e-12)
        mean = np.clip(prox - (phi @ c_true).reshape(h, w) + rough,
                       PROX_FLOOR, 1.0)
        target = (prox - mean).reshape(-1)
        code = np.linalg.lstsq(phi, target, rcond=None)[0]
        resid = target - phi @ code
    elif mode == "data":
        if valid is None:
            valid = np.isfinite(depth) & (np.asarray(depth) > 0)
        valid = np.asarray(valid, dtype=bool)
        fill = prox[valid].mean() if valid.any() else 0.5
        mean = np.clip(_box3(np.where(valid, prox, fill), passes=12),
                       PROX_FLOOR, 1.0)
        vm = valid.reshape(-1)
        target = (prox - mean).reshape(-1)[vm]
        phi_v = phi[vm]
        bv = b.reshape(-1)[vm]
        if objective == "laplace":
            code = _laplace_irls(phi_v, target, bv)
        elif objective == "l2":
            wgt = 1.0 / np.sqrt(bv)
            code = np.linalg.lstsq(phi_v * wgt[:, None], target * wgt, rcond=None)[0]
        else:
            raise ValueError("unknown objective %r" % objective)
        resid = target - phi_v @ code
    else:
        raise ValueError("unknown fit mode %r" % mode)

    data = DecoderData(
        code_size=basis.code_size,
        levels=pyramid_levels(mean, b, phi, basis.code_size),
        source_id=source_id,
    )
    info = FitInfo(code=code, rms=float(np.sqrt(np.mean(resid**2))),
                   objective=objective if mode == "data" else "l2")
    return data, info
