"""Parametric synthetic scenes.

A scene is a handful of analytic primitives (planes, spheres, boxes)
sharing one procedural Lambertian albedo, plus a camera trajectory.
Everything is deterministic given the seed, and every surface a camera
can see must sit between DEPTH_MIN and DEPTH_MAX metres in front of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

DEPTH_MIN = 0.3
DEPTH_MAX = 10.0


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class Calib:
    """Pinhole intrinsics; cx/cy in pixel-centre coordinates."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def as_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}


def standard_calib(width, height, f_scale=0.625):
    return Calib(fx=f_scale * width, fy=f_scale * width,
                 cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                 width=width, height=height)


@dataclass(frozen=True)
class Plane:
    """Infinite plane {x : n.x = dist}, n normalized at construction."""

    normal: tuple
    dist: float

    def intersect(self, origin, dirs):
        n = _unit(self.normal)
        denom = dirs @ n
        num = self.dist - origin @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(denom) > 1e-12, num / denom, np.inf)
        t = np.where(t > 0, t, np.inf)
        normals = np.broadcast_to(n, dirs.shape)
        return t, normals


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def intersect(self, origin, dirs):
        c = np.asarray(self.center, dtype=np.float64)
        oc = origin - c
        a = np.einsum("...i,...i->...", dirs, dirs)
        b = 2.0 * dirs @ oc
        disc = b * b - 4.0 * a * (oc @ oc - self.radius**2)
        with np.errstate(invalid="ignore"):
            t = (-b - np.sqrt(disc)) / (2.0 * a)  # near root only
        t = np.where((disc >= 0) & (t > 0), t, np.inf)
        pts = origin + t[..., None] * dirs
        normals = (pts - c) / self.radius
        return t, normals


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; cameras must stay outside."""

    lo: tuple
    hi: tuple

    def intersect(self, origin, dirs):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - origin) / dirs
            t2 = (hi - origin) / dirs
        tn = np.nanmax(np.minimum(t1, t2), axis=-1)
        tf = np.nanmin(np.maximum(t1, t2), axis=-1)
        hit = (tn <= tf) & (tn > 0)
        t = np.where(hit, tn, np.inf)
        # entry face: the axis whose near-slab produced tn, signed against the ray
        near = np.minimum(t1, t2)
        axis = np.nanargmax(np.where(np.isfinite(near), near, -np.inf), axis=-1)
        normals = np.zeros(dirs.shape)
        idx = np.indices(axis.shape)
        normals[(*idx, axis)] = -np.sign(
            np.take_along_axis(dirs, axis[..., None], axis=-1)[..., 0]
        )
        return t, normals


class BandTexture:
    """Sum of 3D cosine waves over world position.

    bands is a tuple of (freq_lo, freq_hi[, weight]) in rad/m; the six
    components cycle through the bands, so a low band plus a high band
    gives coarse structure for wide basins and fine ripple for precise
    locking at the same time.
    """

    def __init__(self, seed=0, bands=((1.0, 3.0, 1.0),), n_waves=6,
                 base=0.55, contrast=0.38):
        rng = np.random.default_rng(seed)
        bands = [b if len(b) == 3 else (b[0], b[1], 1.0) for b in bands]
        freqs, amps = [], []
        for i in range(n_waves):
            lo, hi, weight = bands[i % len(bands)]
            direction = _unit(rng.standard_normal(3))
            freqs.append(direction * rng.uniform(lo, hi))
            amps.append(weight * rng.uniform(0.5, 1.0))
        self.freqs = np.array(freqs)
        self.phases = rng.uniform(0, 2 * np.pi, n_waves)
        amps = np.array(amps)
        self.amps = contrast * amps / np.sum(np.abs(amps))
        self.base = base

    def albedo(self, points):
        phase = points @ self.freqs.T + self.phases
        return self.base + np.cos(phase) @ self.amps


@dataclass
class SyntheticScene:
    primitives: tuple
    texture: BandTexture
    trajectory: list = field(default_factory=list)  # 4x4 world-from-camera
    light: tuple = (0.3, -0.5, 0.8)  # travel direction, into the scene
    ambient: float = 0.6


def pose_rt(rotvec, translation):
    """4x4 world-from-camera matrix from a rotation vector and translation."""
    T = np.eye(4)
    T[:3, :3] = Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_matrix()
    T[:3, 3] = translation
    return T


def make_trajectory(motion, n_frames, step):
    """Pose list for the named motion pattern.

    lateral/forward translate along camera x/z by `step` metres per
    frame; rotation-only yaws about the camera centre by `step` radians
    per frame with zero translation.
    """
    poses = []
    for i in range(n_frames):
        if motion == "lateral":
            poses.append(pose_rt([0, 0, 0], [step * i, 0.0, 0.0]))
        elif motion == "forward":
            poses.append(pose_rt([0, 0, 0], [0.0, 0.0, step * i]))
        elif motion == "rotation-only":
            poses.append(pose_rt([0.0, step * i, 0.0], [0.0, 0.0, 0.0]))
        else:
            raise ValueError("unknown motion pattern %r" % motion)
    return poses
