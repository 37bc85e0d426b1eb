"""Dense warping, photometric/geometric residuals, and their Jacobians.

A residual block pairs a reference keyframe A (supplying the pixel grid
and the depth through its decoded proximity) with a target frame B that
is sampled at the warped correspondences

    v = project(R * unproject(u, d) + t),    d = depth(prox_A[u]).

Photometric residuals compare intensities, r = I_A[u] - (g*I_B[v] + b);
geometric residuals compare decoded proximities, r = P_A[u] - P_B[v].
Per-pixel confidence multiplies five factors: the validity mask, a Huber
IRLS weight, a slant weight against grazing surfaces, an occlusion
weight (photometric only), and the decoder's 1/b reliability map.

All image and proximity lookups go through the smoothing surfaces of
`interp`, values on the A grid included, so a pair at identity pose with
equal codes has exactly zero residual and every analytic Jacobian is the
true derivative of the sampled quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import interp
from .decoder import decode_active_mask, decode_proximity
from .errors import DimensionMismatch, UnsupportedFormat
from .geometry import MIN_DEPTH, CameraIntrinsics, ProximityParams

N_PYRAMID_LEVELS = 4
MIN_PYRAMID_INPUT = 32  # smallest side that still yields 4 usable levels


@dataclass(frozen=True)
class ImagePyramid:
    """4 greyscale float32 levels in [0,1], finest first, with per-level
    central-difference gradient maps (kept for diagnostics; residual
    evaluation differentiates the sampling surface instead)."""

    levels: tuple
    grad_x: tuple
    grad_y: tuple

    def __post_init__(self):
        if len(self.levels) != N_PYRAMID_LEVELS:
            raise DimensionMismatch("pyramid must have %d levels" % N_PYRAMID_LEVELS)
        for i in range(1, N_PYRAMID_LEVELS):
            ph, pw = self.levels[i - 1].shape
            h, w = self.levels[i].shape
            if (h, w) != (ph // 2, pw // 2):
                raise DimensionMismatch("pyramid level %d dims must halve" % i)


def _central_diff(img):
    gx = np.empty_like(img)
    gy = np.empty_like(img)
    gx[:, 1:-1] = 0.5 * (img[:, 2:] - img[:, :-2])
    gx[:, 0] = img[:, 1] - img[:, 0]
    gx[:, -1] = img[:, -1] - img[:, -2]
    gy[1:-1, :] = 0.5 * (img[2:, :] - img[:-2, :])
    gy[0, :] = img[1, :] - img[0, :]
    gy[-1, :] = img[-1, :] - img[-2, :]
    return gx, gy


def build_pyramid(image, n_levels=N_PYRAMID_LEVELS):
    """2x2 box-filter pyramid of a greyscale image in [0, 1]."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise DimensionMismatch("expected a single-channel image")
    if min(image.shape) < MIN_PYRAMID_INPUT:
        raise UnsupportedFormat(
            "image %dx%d below minimum %dx%d"
            % (image.shape[1], image.shape[0], MIN_PYRAMID_INPUT, MIN_PYRAMID_INPUT)
        )
    levels, gxs, gys = [], [], []
    cur = image.astype(np.float32)
    for _ in range(n_levels):
        levels.append(cur)
        gx, gy = _central_diff(cur)
        gxs.append(gx)
        gys.append(gy)
        h, w = cur.shape
        cur = (
            cur[: h - h % 2 : 2, : w - w % 2 : 2]
            + cur[1 : h - h % 2 : 2, : w - w % 2 : 2]
            + cur[: h - h % 2 : 2, 1 : w - w % 2 : 2]
            + cur[1 : h - h % 2 : 2, 1 : w - w % 2 : 2]
        ) * np.float32(0.25)
    return ImagePyramid(levels=tuple(levels), grad_x=tuple(gxs), grad_y=tuple(gys))


@dataclass
class ResidualOptions:
    huber_delta_photo: float = 0.1  # intensity units
    huber_delta_geo: float = 0.05  # proximity units
    geo_weight: float = 1.0
    slant_threshold: float = math.cos(math.radians(80.0))
    occlusion_z_tol: float = 0.05  # proximity units
    affine_gain: float = 1.0
    affine_bias: float = 0.0

    def __post_init__(self):
        if min(self.huber_delta_photo, self.huber_delta_geo) <= 0:
            raise ValueError("huber deltas must be positive")
        if self.slant_threshold <= 0 or self.occlusion_z_tol <= 0:
            raise ValueError("slant/occlusion thresholds must be positive")
        if self.geo_weight < 0:
            raise ValueError("geo_weight must be nonnegative")


def huber_weight(r, delta):
    """IRLS weight of the Huber loss: 1 inside delta, delta/|r| outside."""
    a = np.abs(np.asarray(r, dtype=np.float64))
    return np.where(a <= delta, 1.0, delta / np.maximum(a, 1e-300))


def huber_cost(r, delta):
    a = np.abs(np.asarray(r, dtype=np.float64))
    return np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))


def slant_weight(cos_theta, threshold):
    """clamp(cos/threshold, 0, 1); 1 fronto-parallel, 0 edge-on."""
    return np.clip(np.asarray(cos_theta, dtype=np.float64) / threshold, 0.0, 1.0)


def occlusion_weight(prox_expected, prox_at_v, tol):
    """Down-weight pixels whose target surface sits in front of the
    prediction. A closer surface means larger proximity; the weight is 1
    while prox_at_v <= expected + tol and exp(-(delta/tol)^2) past that,
    with delta measured from the prediction itself."""
    delta = np.asarray(prox_at_v, dtype=np.float64) - prox_expected
    return np.where(delta <= tol, 1.0, np.exp(-((delta / tol) ** 2)))


def level_weights(levels):
    """Per-level weights 4^L normalized over the used levels."""
    w = 4.0 ** np.asarray(levels, dtype=np.float64)
    return w / w.sum()


class FrameLevel:
    """One pyramid level of one frame, prepared for residual evaluation.

    Holds the raw intensity (surface coefficients), its grid smoothing,
    and, when a decoder and code are present, the decoded proximity with
    its smoothed map, surface gradients, clamp-masked code Jacobian, and
    the 1/b reliability map. Codes change every solver iteration, so
    instances are cheap throwaways rebuilt from the current estimate.
    """

    def __init__(self, intensity, intrinsics, decoder=None, code=None,
                 build_code_jacobian=True):
        self.intensity = np.asarray(intensity, dtype=np.float64)
        self.height, self.width = self.intensity.shape
        if (intrinsics.width, intrinsics.height) != (self.width, self.height):
            raise DimensionMismatch("intrinsics do not match image size")
        self.intrinsics = intrinsics
        self.smooth_intensity = interp.smooth_grid(self.intensity)

        ys, xs = np.mgrid[0 : self.height, 0 : self.width]
        self.u_x = xs.reshape(-1).astype(np.float64)
        self.u_y = ys.reshape(-1).astype(np.float64)
        self.interior = interp.valid_box(self.u_x, self.u_y, self.width, self.height)
        self.rays = np.stack(
            [
                (self.u_x - intrinsics.cx) / intrinsics.fx,
                (self.u_y - intrinsics.cy) / intrinsics.fy,
                np.ones_like(self.u_x),
            ],
            axis=-1,
        )

        self.prox = None
        self.smooth_prox = None
        self.prox_gx = None
        self.prox_gy = None
        self.code_jac = None
        self.smooth_code_jac = None
        self.inv_b = None
        if decoder is not None:
            if code is None:
                raise DimensionMismatch("decoder given without a code")
            level = _match_level(decoder, self.width, self.height)
            self.prox = decode_proximity(decoder, code, level)
            self.smooth_prox = interp.smooth_grid(self.prox)
            self.prox_gx, self.prox_gy = interp.smooth_grid_gradients(self.prox)
            self.inv_b = 1.0 / decoder.levels[level].uncertainty
            if build_code_jacobian:
                mask = decode_active_mask(decoder, code, level).reshape(-1, 1)
                self.code_jac = decoder.levels[level].jacobian * mask
                k = self.code_jac.shape[1]
                stack = self.code_jac.reshape(self.height, self.width, k)
                self.smooth_code_jac = interp.smooth_grid(stack).reshape(-1, k)


def _match_level(decoder, width, height):
    for i, lvl in enumerate(decoder.levels):
        if (lvl.width, lvl.height) == (width, height):
            return i
    raise DimensionMismatch(
        "decoder has no %dx%d level to match the image" % (width, height)
    )


@dataclass
class ResidualBlock:
    """Per-pixel residuals over frame A's interior grid, with weights and
    Jacobian rows. Invalid pixels carry weight 0 and zeroed rows. `cost`
    is the robust (Huber) objective of the block under every weight
    factor except the IRLS one, which is what the solver's step
    acceptance compares."""

    residuals: np.ndarray  # (N,)
    weights: np.ndarray  # (N,) mask*huber*slant*occlusion*(1/b) [*geo_weight]
    valid_mask: np.ndarray  # (N,) bool
    pixels: np.ndarray  # (N, 2) x, y on A's grid
    cost: float
    J_pose_A: np.ndarray = None  # (N, 6) tangent [tx ty tz rx ry rz]
    J_pose_B: np.ndarray = None
    J_code_A: np.ndarray = None
    J_code_B: np.ndarray = None
    J_affine: np.ndarray = None  # (N, 2) d r / d (gain, bias)

    @property
    def n_valid(self):
        return int(self.valid_mask.sum())


def warp_pixel(u, prox_A, T_AB, intrinsics, params=ProximityParams()):
    """Warp pixels of A into B through A's proximity.

    `u` is (2,) or (N, 2); `prox_A` is either a full map indexed at the
    (integer) pixels or per-pixel proximity values. Returns (v, depth_B,
    valid); out-of-view pixels (depth <= 1e-6 m on either side, or the
    warp leaving B's sampling box) are flagged, not errors.
    """
    u = np.asarray(u, dtype=np.float64)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    prox_A = np.asarray(prox_A, dtype=np.float64)
    if prox_A.ndim == 2:
        p = prox_A[u[:, 1].astype(np.int64), u[:, 0].astype(np.int64)]
    else:
        p = np.broadcast_to(prox_A.reshape(-1), (u.shape[0],))
    d = params.a * (1.0 - p) / np.maximum(p, 1e-300)
    valid = d > MIN_DEPTH
    ray = np.stack(
        [
            (u[:, 0] - intrinsics.cx) / intrinsics.fx,
            (u[:, 1] - intrinsics.cy) / intrinsics.fy,
            np.ones(u.shape[0]),
        ],
        axis=-1,
    )
    x_b = (d[:, None] * ray) @ T_AB.rotation.T + T_AB.translation
    z = x_b[:, 2]
    valid &= z > MIN_DEPTH
    zs = np.where(valid, z, 1.0)
    v = np.stack(
        [
            intrinsics.fx * x_b[:, 0] / zs + intrinsics.cx,
            intrinsics.fy * x_b[:, 1] / zs + intrinsics.cy,
        ],
        axis=-1,
    )
    valid &= interp.valid_box(v[:, 0], v[:, 1], intrinsics.width, intrinsics.height)
    if single:
        return v[0], float(z[0]), bool(valid[0])
    return v, z, valid


def _slant_cos(fl, d, dd_dp, idx):
    # surface tangents t_x, t_y of the back-projected patch; cos of the
    # angle between their normal and the viewing ray
    ray = fl.rays[idx]
    gx = fl.prox_gx.reshape(-1)[idx]
    gy = fl.prox_gy.reshape(-1)[idx]
    tx = (dd_dp * gx)[:, None] * ray
    tx[:, 0] += d / fl.intrinsics.fx
    ty = (dd_dp * gy)[:, None] * ray
    ty[:, 1] += d / fl.intrinsics.fy
    n = np.cross(tx, ty)
    nn = np.linalg.norm(n, axis=-1) * np.linalg.norm(ray, axis=-1)
    cos = np.abs((n * ray).sum(axis=-1)) / np.maximum(nn, 1e-300)
    return np.where(nn > 0, cos, 0.0)


def _evaluate(fl_a, fl_b, T_A, T_B, opts, params, kind, want_jacobians):
    if fl_a.prox is None:
        raise DimensionMismatch("reference frame has no decoded proximity")
    if kind == "geo" and fl_b.prox is None:
        raise DimensionMismatch("geometric residual needs decoders on both frames")

    idx = np.flatnonzero(fl_a.interior)
    n = idx.size
    a = params.a
    p_a = fl_a.smooth_prox.reshape(-1)[idx]
    d = a * (1.0 - p_a) / p_a
    valid = d > MIN_DEPTH

    ray = fl_a.rays[idx]
    R_A, t_A = T_A.rotation, T_A.translation
    R_B, t_B = T_B.rotation, T_B.translation
    x_w = (d[:, None] * ray) @ R_A.T + t_A
    x_b = (x_w - t_B) @ R_B
    z = x_b[:, 2]
    valid &= z > MIN_DEPTH
    zs = np.where(z > MIN_DEPTH, z, 1.0)

    K = fl_b.intrinsics
    vx = K.fx * x_b[:, 0] / zs + K.cx
    vy = K.fy * x_b[:, 1] / zs + K.cy
    tap_idx, tw, twx, twy, v_ok = interp.surface_taps(vx, vy, fl_b.width, fl_b.height)
    valid &= v_ok

    dd_dp = -a / (p_a * p_a)
    w_slant = slant_weight(_slant_cos(fl_a, d, dd_dp, idx), opts.slant_threshold)
    inv_b = fl_a.inv_b.reshape(-1)[idx]

    if kind == "photo":
        gath = fl_b.intensity.reshape(-1)[tap_idx]
        i_bv = (gath * tw).sum(axis=1)
        r = (
            fl_a.smooth_intensity.reshape(-1)[idx]
            - opts.affine_gain * i_bv
            - opts.affine_bias
        )
        if fl_b.prox is not None:
            p_bv = (fl_b.prox.reshape(-1)[tap_idx] * tw).sum(axis=1)
            w_occ = occlusion_weight(a / (zs + a), p_bv, opts.occlusion_z_tol)
        else:
            w_occ = np.ones(n)
        delta, rel = opts.huber_delta_photo, 1.0
    else:
        gath = fl_b.prox.reshape(-1)[tap_idx]
        p_bv = (gath * tw).sum(axis=1)
        r = p_a - p_bv
        w_occ = np.ones(n)
        delta, rel = opts.huber_delta_geo, opts.geo_weight

    r = np.where(valid, r, 0.0)
    base = valid * w_slant * w_occ * inv_b * rel
    weights = base * huber_weight(r, delta)
    cost = float((base * huber_cost(r, delta)).sum())

    block = ResidualBlock(
        residuals=r,
        weights=weights,
        valid_mask=valid,
        pixels=np.stack([fl_a.u_x[idx], fl_a.u_y[idx]], axis=-1),
        cost=cost,
    )
    if not want_jacobians:
        return block

    # d r / d x_B through the projection, then one chain per variable
    gvx = (gath * twx).sum(axis=1)
    gvy = (gath * twy).sum(axis=1)
    scale = opts.affine_gain if kind == "photo" else 1.0
    gx = K.fx * gvx / zs
    gy = K.fy * gvy / zs
    a_i = np.stack([gx, gy, -(gx * x_b[:, 0] + gy * x_b[:, 1]) / zs], axis=-1)
    a_i *= -scale

    on = valid[:, None].astype(np.float64)
    m = a_i @ R_B.T
    J_pose_A = np.concatenate([m, np.cross(x_w, m)], axis=-1) * on
    block.J_pose_A = J_pose_A
    block.J_pose_B = -J_pose_A

    if fl_a.smooth_code_jac is not None:
        gamma = (a_i * (ray @ (R_A.T @ R_B))).sum(axis=-1)
        direct = 1.0 if kind == "geo" else 0.0
        coeff = direct + gamma * dd_dp
        block.J_code_A = coeff[:, None] * fl_a.smooth_code_jac[idx] * on

    if kind == "geo":
        if fl_b.code_jac is not None:
            jb = fl_b.code_jac[tap_idx]
            block.J_code_B = -(tw[:, :, None] * jb).sum(axis=1) * on
    else:
        block.J_affine = np.stack([-i_bv, -np.ones(n)], axis=-1) * on
    return block


def photometric_residual(frame_a, frame_b, T_AB, c_a, opts, level=0,
                         params=ProximityParams(), want_jacobians=True):
    """Intensity residual of keyframe A against frame B at one level.

    A needs a decoder (for depth); B only needs images. T_AB maps A
    coordinates into B. Mostly a convenience wrapper: drivers prepare
    FrameLevel objects once per iteration and call evaluate_level.
    """
    fl_a = FrameLevel(
        frame_a.pyramid.levels[level],
        frame_a.intrinsics.scaled(level),
        frame_a.decoder,
        c_a,
    )
    dec_b = getattr(frame_b, "decoder", None)
    fl_b = FrameLevel(
        frame_b.pyramid.levels[level],
        frame_b.intrinsics.scaled(level),
        dec_b,
        getattr(frame_b, "code", None) if dec_b is not None else None,
    )
    return _evaluate(
        fl_a, fl_b, T_AB, type(T_AB).identity(), opts, params, "photo", want_jacobians
    )


def geometric_residual(frame_a, frame_b, T_AB, c_a, c_b, opts, level=0,
                       params=ProximityParams(), want_jacobians=True):
    """Proximity residual P_A[u] - P_B[v] between two decoded keyframes."""
    fl_a = FrameLevel(
        frame_a.pyramid.levels[level],
        frame_a.intrinsics.scaled(level),
        frame_a.decoder,
        c_a,
    )
    fl_b = FrameLevel(
        frame_b.pyramid.levels[level],
        frame_b.intrinsics.scaled(level),
        frame_b.decoder,
        c_b,
    )
    return _evaluate(
        fl_a, fl_b, T_AB, type(T_AB).identity(), opts, params, "geo", want_jacobians
    )


def evaluate_level(fl_a, fl_b, T_A, T_B, opts, params, kind, want_jacobians=True):
    """Residual block from prepared FrameLevels under world poses.

    Jacobians are taken w.r.t. left-multiplicative updates of the global
    poses T_A and T_B, so a shared rigid motion of both frames moves the
    residual by exactly nothing: J_pose_B = -J_pose_A row by row, which
    the solver's gauge handling relies on.
    """
    return _evaluate(fl_a, fl_b, T_A, T_B, opts, params, kind, want_jacobians)
