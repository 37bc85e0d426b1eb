#!/usr/bin/env python3
"""Regenerate the committed datasets under tests/fixtures/.

The engine's test suite reads only the committed files, so this needs to
run just when a recipe here changes. Every dataset carries rendered
images, ground-truth depth and poses, one decoder artifact per frame, and
fit_report.json recording each frame's reference code and fit residual
(tests assert the optimizer lands within a factor of that residual).

Requires the decoder-gen package (pip install -e decoder-gen).
"""

import argparse
import os
import shutil

import numpy as np

from decodergen import BasisSpec, FixtureSpec, emit_fixture, pose_rt

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
OUT_DIR = os.path.join(ROOT, "tests", "fixtures")


def build_specs():
    deg = np.deg2rad
    return {
        # two frames, baseline 5% of the ~2 m scene depth; also feeds the
        # jacobian and gauge checks. rough_rms=0 and edge_strength=0: the
        # finite-difference suite runs at a fixed step, so this decoder's
        # surfaces must stay inside the truncation-valid regime; the rough
        # field and the edge-modulated columns both put pixel-scale
        # curvature into the proximity mean, which turns central
        # differences into noise long before step 1e-4.
        "sfm_two_frame": FixtureSpec(
            n_frames=2, motion="lateral", step=0.10,
            width=256, height=192,
            basis=BasisSpec(kind="dct2d", code_size=12, smoothness=1.0),
            seed=7, rough_rms=0.0, edge_strength=0.0,
        ),
        # master plus six partners at growing baselines, partners noisy
        "multiframe": FixtureSpec(
            n_frames=7, motion="lateral", step=0.05,
            width=128, height=96,
            basis=BasisSpec(kind="dct2d", code_size=8, smoothness=1.0),
            seed=7, noise_sigma=0.01,
        ),
        # frame 0 is the keyframe; frame 1 sits 2 deg / 4 cm away, frame 2
        # is a 20 deg yaw that only a coarse-to-fine schedule can catch.
        # Wide FOV and a low-frequency texture band keep the coarse basin
        # wide; the high band makes the finest level alias-prone.
        "tracking": FixtureSpec(
            n_frames=3, width=128, height=96, f_scale=0.4,
            basis=BasisSpec(kind="dct2d", code_size=8, smoothness=1.0),
            seed=7,
            sphere=(0.3, -0.1, 2.5, 0.7),
            bands=((0.6, 2.0, 3.0), (8.0, 12.0, 1.0)),
            poses=[
                np.eye(4),
                pose_rt([0.0, deg(2.0), 0.0], [0.04, 0.0, 0.0]),
                pose_rt([0.0, deg(20.0), 0.0], [0.0, 0.0, 0.0]),
            ],
        ),
        # pure yaw, 2 deg per frame, no translation at all
        "rotation_only": FixtureSpec(
            n_frames=3, motion="rotation-only", step=deg(2.0),
            width=128, height=96,
            basis=BasisSpec(kind="dct2d", code_size=8, smoothness=1.0),
            seed=7,
        ),
        # long steady sweep for the sliding-window regression
        "slam_seq": FixtureSpec(
            n_frames=60, motion="lateral", step=0.02,
            width=64, height=48,
            basis=BasisSpec(kind="dct2d", code_size=4, smoothness=1.0),
            seed=7,
        ),
    }


def main():
    specs = build_specs()
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", choices=[[], *specs], default=[],
                    help="subset to regenerate (default: all)")
    args = ap.parse_args()
    names = args.names or list(specs)
    for name in names:
        out = os.path.join(OUT_DIR, name)
        if os.path.isdir(out):
            shutil.rmtree(out)
        report = emit_fixture(out, specs[name])
        worst = max(f["fit_rms"] for f in report["frames"])
        print("%-14s %2d frames, worst fit rms %.2e -> %s"
              % (name, len(report["frames"]), worst,
                 os.path.relpath(out, ROOT)))


if __name__ == "__main__":
    main()
