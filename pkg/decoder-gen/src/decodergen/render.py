"""Ray-traced greyscale rendering with exact per-pixel depth.

Rays carry unit camera-z, so the intersection parameter t is the z-depth
directly and matches the pinhole projection model with no trig anywhere.
"""

from __future__ import annotations

import numpy as np

from .scene import DEPTH_MAX, DEPTH_MIN, _unit


def camera_rays(calib, pose):
    """World-frame ray origins and directions, one per pixel.

    Directions are not normalized: their camera-frame z component is 1,
    which makes the ray parameter equal to z-depth.
    """
    ys, xs = np.mgrid[0:calib.height, 0:calib.width]
    dirs_cam = np.stack(
        [(xs - calib.cx) / calib.fx, (ys - calib.cy) / calib.fy,
         np.ones_like(xs, dtype=np.float64)],
        axis=-1,
    )
    R = pose[:3, :3]
    return pose[:3, 3], dirs_cam @ R.T


def render_scene(scene, pose, calib):
    """(image, depth) float arrays for one camera.

    Raises ValueError if any pixel misses all primitives or the hit
    falls outside the legal [DEPTH_MIN, DEPTH_MAX] depth range: fixture
    scenes are supposed to fill the frame.
    """
    origin, dirs = camera_rays(calib, pose)
    depth = np.full(dirs.shape[:2], np.inf)
    normals = np.zeros(dirs.shape)
    for prim in scene.primitives:
        t, n = prim.intersect(origin, dirs)
        closer = t < depth
        depth = np.where(closer, t, depth)
        normals = np.where(closer[..., None], n, normals)
    if not np.all(np.isfinite(depth)):
        raise ValueError("scene does not cover the full frame")
    if depth.min() < DEPTH_MIN or depth.max() > DEPTH_MAX:
        raise ValueError(
            "depth range [%.3f, %.3f] outside [%g, %g]"
            % (depth.min(), depth.max(), DEPTH_MIN, DEPTH_MAX)
        )

    points = origin + depth[..., None] * dirs
    albedo = scene.texture.albedo(points)
    # orient normals against the viewing ray before shading
    facing = np.einsum("...i,...i->...", normals, dirs)
    oriented = normals * -np.sign(facing)[..., None]
    lam = np.maximum(0.0, oriented @ -_unit(scene.light))
    shade = scene.ambient + (1.0 - scene.ambient) * lam
    image = np.clip(albedo * shade, 0.0, 1.0)
    return image.astype(np.float64), depth
