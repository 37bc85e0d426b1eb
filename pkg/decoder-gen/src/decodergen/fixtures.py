"""Emit complete, engine-consumable fixture datasets.

A fixture directory holds 16-bit greyscale frames plus timestamps,
16-bit millimetre depth maps, one decoder artifact per frame, the
calibration, a manifest tying them together, the ground-truth
trajectory, and a fit report recording each frame's ground-truth code
and its residual.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy.spatial.transform import Rotation

from .basis import BasisSpec, pca_basis
from .fit import fit_linear_decoder
from .artifact import write_decoder
from .render import render_scene
from .scene import (BandTexture, Plane, Sphere, SyntheticScene, _unit,
                    make_trajectory, standard_calib)


@dataclass
class FixtureSpec:
    n_frames: int = 2
    motion: str = "lateral"
    step: float = 0.1  # metres per frame, or radians for rotation-only
    width: int = 256
    height: int = 192
    f_scale: float = 0.625
    basis: BasisSpec = field(default_factory=lambda: BasisSpec(code_size=16))
    seed: int = 7
    proximity_a: float = 2.0
    noise_sigma: float = 0.0  # image noise on frames > 0; frame 0 stays clean
    bias_rms: float = 0.03
    rough_rms: float = 0.002
    edge_strength: float = 1.0
    wall_dist: float = 2.2
    wall_normal: tuple = (0.0, 0.0, 1.0)
    sphere: tuple = (0.3, -0.1, 2.7, 0.8)  # cx, cy, cz, radius; None for bare wall
    bands: tuple = ((1.0, 3.0, 1.0), (5.0, 9.0, 1.0))
    ambient: float = 0.6
    poses: list = None  # explicit 4x4 trajectory, overrides motion/step


def build_scene(spec: FixtureSpec) -> SyntheticScene:
    n = _unit(spec.wall_normal)
    prims = [Plane(normal=tuple(n), dist=float(n @ [0.0, 0.0, spec.wall_dist]))]
    if spec.sphere is not None:
        prims.append(Sphere(center=tuple(spec.sphere[:3]), radius=spec.sphere[3]))
    poses = (spec.poses if spec.poses is not None
             else make_trajectory(spec.motion, spec.n_frames, spec.step))
    return SyntheticScene(
        primitives=tuple(prims),
        texture=BandTexture(seed=spec.seed, bands=spec.bands),
        trajectory=list(poses),
        ambient=spec.ambient,
    )


def _pose_line(ts, pose):
    q = Rotation.from_matrix(pose[:3, :3]).as_quat()
    t = pose[:3, 3]
    return ("%.6f %.12f %.12f %.12f %.12f %.12f %.12f %.12f"
            % (ts, t[0], t[1], t[2], q[0], q[1], q[2], q[3]))


def _pca_columns(scene, calib, spec, n_samples=40):
    """Proximity principal components from pose-jittered renders."""
    rng = np.random.default_rng([spec.seed, 77])
    samples = []
    for _ in range(n_samples):
        pose = scene.trajectory[rng.integers(len(scene.trajectory))].copy()
        pose[:3, 3] += 0.03 * rng.standard_normal(3)
        _, depth = render_scene(scene, pose, calib)
        samples.append((spec.proximity_a / (depth + spec.proximity_a)).reshape(-1))
    cols, _ = pca_basis(np.array(samples), spec.basis.code_size)
    return cols


def emit_fixture(outdir, spec: FixtureSpec):
    """Write the dataset; returns the fit report dict."""
    scene = build_scene(spec)
    calib = standard_calib(spec.width, spec.height, spec.f_scale)
    for sub in ("frames", "depth", "decoders"):
        os.makedirs(os.path.join(outdir, sub), exist_ok=True)

    columns = None
    if spec.basis.kind == "pca":
        columns = _pca_columns(scene, calib, spec)

    stamps, entries, report_frames, pose_lines = [], [], [], []
    for i, pose in enumerate(scene.trajectory):
        fid = "f%02d" % i
        ts = 0.1 * i
        image, depth = render_scene(scene, pose, calib)

        saved = image
        if i > 0 and spec.noise_sigma > 0:
            noise_rng = np.random.default_rng([spec.seed, 1000 + i])
            saved = image + spec.noise_sigma * noise_rng.standard_normal(image.shape)
        cv2.imwrite(
            os.path.join(outdir, "frames", fid + ".png"),
            np.rint(np.clip(saved, 0.0, 1.0) * 65535.0).astype(np.uint16),
        )
        cv2.imwrite(
            os.path.join(outdir, "depth", fid + ".png"),
            np.rint(depth * 1000.0).astype(np.uint16),
        )

        data, info = fit_linear_decoder(
            image, depth, spec.basis, spec.proximity_a,
            mode="fixture", rng=np.random.default_rng([spec.seed, i]),
            bias_rms=spec.bias_rms, rough_rms=spec.rough_rms,
            edge_strength=spec.edge_strength,
            columns=columns, source_id=fid,
        )
        write_decoder(data, os.path.join(outdir, "decoders", fid + ".csdm"))

        stamps.append("%.6f" % ts)
        entries.append({"image": "frames/%s.png" % fid, "timestamp": ts,
                        "depth": "depth/%s.png" % fid,
                        "decoder": "decoders/%s.csdm" % fid})
        pose_lines.append(_pose_line(ts, pose))
        report_frames.append({"id": fid, "timestamp": ts,
                              "fit_rms": info.rms,
                              "code_gt": [float(x) for x in info.code]})

    with open(os.path.join(outdir, "frames", "timestamps.txt"), "w") as f:
        f.write("\n".join(stamps) + "\n")
    with open(os.path.join(outdir, "calib.json"), "w") as f:
        json.dump(dict(calib.as_dict(), avg_depth=spec.proximity_a), f, indent=2)
    with open(os.path.join(outdir, "manifest.json"), "w") as f:
        json.dump({"calibration": "calib.json", "frames": entries}, f, indent=2)
    with open(os.path.join(outdir, "gt_poses.txt"), "w") as f:
        f.write("\n".join(pose_lines) + "\n")

    report = {
        "motion": spec.motion, "step": spec.step, "seed": spec.seed,
        "proximity_a": spec.proximity_a, "noise_sigma": spec.noise_sigma,
        "basis": {"kind": spec.basis.kind, "code_size": spec.basis.code_size,
                  "smoothness": spec.basis.smoothness},
        "bias_rms": spec.bias_rms, "rough_rms": spec.rough_rms,
        "frames": report_frames,
    }
    with open(os.path.join(outdir, "fit_report.json"), "w") as f:
        json.dump(report, f, indent=2)
    return report
