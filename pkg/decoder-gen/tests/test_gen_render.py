"""Renderer oracles: analytic depths, two-view consistency, validation."""

import numpy as np
import pytest

from decodergen import (BandTexture, Box, Plane, Sphere, SyntheticScene,
                        make_trajectory, pose_rt, render_scene, standard_calib)
from decodergen.render import camera_rays


def wall_scene(seed=1, dist=2.2, sphere=None, extra=()):
    prims = [Plane(normal=(0.0, 0.0, 1.0), dist=dist)]
    if sphere is not None:
        prims.append(sphere)
    prims.extend(extra)
    return SyntheticScene(primitives=tuple(prims),
                          texture=BandTexture(seed=seed))


def test_fronto_parallel_plane_has_constant_depth():
    scene = wall_scene(dist=2.0)
    _, depth = render_scene(scene, np.eye(4), standard_calib(64, 48))
    assert np.all(depth == 2.0)


def test_sphere_hits_lie_on_the_sphere_to_nanometres():
    center = np.array([0.25, -0.1, 2.4])
    radius = 0.7
    scene = wall_scene(dist=3.0, sphere=Sphere(center=tuple(center), radius=radius))
    calib = standard_calib(96, 72)
    pose = np.eye(4)
    _, depth = render_scene(scene, pose, calib)

    origin, dirs = camera_rays(calib, pose)
    pts = origin + depth[..., None] * dirs
    on_sphere = depth < 3.0 - 1e-9
    assert on_sphere.sum() > 500
    err = np.abs(np.linalg.norm(pts[on_sphere] - center, axis=-1) - radius)
    assert err.max() < 1e-9
    # near intersection only: surface normal opposes the viewing ray
    n = (pts[on_sphere] - center) / radius
    assert np.all(np.einsum("ij,ij->i", n, dirs[on_sphere]) < 0)
    # rays carry unit camera z, so the parameter is z-depth
    assert np.allclose(pts[..., 2][on_sphere], depth[on_sphere], atol=1e-12)


def test_pure_x_translation_obeys_the_disparity_relation():
    baseline = 0.1
    scene = wall_scene(seed=4, dist=2.2,
                       sphere=Sphere(center=(0.3, -0.1, 2.7), radius=0.8))
    calib = standard_calib(128, 96)
    pose_a = np.eye(4)
    pose_b = pose_rt([0, 0, 0], [baseline, 0.0, 0.0])
    img_a, dep_a = render_scene(scene, pose_a, calib)
    img_b, dep_b = render_scene(scene, pose_b, calib)

    ys, xs = np.mgrid[8:88, 30:120]
    xb = xs - calib.fx * baseline / dep_a[ys, xs]
    x0 = np.floor(xb).astype(int)
    fr = xb - x0
    inb = (x0 >= 0) & (x0 + 1 < calib.width)

    def sample(arr):
        return (1 - fr) * arr[ys, np.clip(x0, 0, calib.width - 1)] \
            + fr * arr[ys, np.clip(x0 + 1, 0, calib.width - 1)]

    # same 3D point, z unchanged: sampled depth must match the source depth
    ddiff = np.abs(sample(dep_b) - dep_a[ys, xs])
    assert np.median(ddiff[inb]) < 1e-3
    # wall pixels whose interpolation stencil stays on the wall: exact
    wall = (dep_a[ys, xs] == 2.2) & inb \
        & (dep_b[ys, np.clip(x0, 0, calib.width - 1)] == 2.2) \
        & (dep_b[ys, np.clip(x0 + 1, 0, calib.width - 1)] == 2.2)
    assert wall.sum() > 1000
    assert ddiff[wall].max() < 1e-9
    # Lambertian world-anchored shading: intensities agree up to interpolation
    idiff = np.abs(sample(img_b) - img_a[ys, xs])
    assert np.median(idiff[inb]) < 5e-3


def test_box_front_face_depth_is_exact():
    box = Box(lo=(-0.4, -0.3, 1.4), hi=(0.2, 0.3, 1.8))
    scene = wall_scene(dist=2.2, extra=(box,))
    calib = standard_calib(64, 48)
    _, depth = render_scene(scene, np.eye(4), calib)
    cy, cx = 24, 32
    assert depth[cy, cx] == 1.4
    assert depth.max() == 2.2


def test_scene_must_cover_the_frame():
    scene = SyntheticScene(
        primitives=(Sphere(center=(0.0, 0.0, 2.0), radius=0.3),),
        texture=BandTexture(seed=0),
    )
    with pytest.raises(ValueError):
        render_scene(scene, np.eye(4), standard_calib(64, 48))


def test_depth_range_is_enforced():
    with pytest.raises(ValueError):
        render_scene(wall_scene(dist=12.0), np.eye(4), standard_calib(64, 48))
    with pytest.raises(ValueError):
        render_scene(wall_scene(dist=0.2), np.eye(4), standard_calib(64, 48))


def test_rendering_is_deterministic():
    scene = wall_scene(seed=9, sphere=Sphere(center=(0.2, 0.0, 2.6), radius=0.6))
    calib = standard_calib(64, 48)
    a1, d1 = render_scene(scene, np.eye(4), calib)
    a2, d2 = render_scene(wall_scene(seed=9, sphere=Sphere(center=(0.2, 0.0, 2.6),
                                                           radius=0.6)),
                          np.eye(4), calib)
    assert np.array_equal(a1, a2) and np.array_equal(d1, d2)


def test_trajectory_patterns():
    lat = make_trajectory("lateral", 3, 0.05)
    assert np.allclose([p[:3, 3] for p in lat],
                       [[0, 0, 0], [0.05, 0, 0], [0.1, 0, 0]])
    fwd = make_trajectory("forward", 2, 0.2)
    assert np.allclose(fwd[1][:3, 3], [0, 0, 0.2])
    rot = make_trajectory("rotation-only", 4, np.deg2rad(2))
    for p in rot:
        assert np.all(p[:3, 3] == 0.0)
    # yaw accumulates about +y
    assert abs(np.arccos(rot[3][0, 0]) - np.deg2rad(6)) < 1e-12
    with pytest.raises(ValueError):
        make_trajectory("sideways", 2, 0.1)
