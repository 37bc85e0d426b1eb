"""Fixture emission end to end, cross-checked through the consumer package."""

import json
import subprocess
import sys

import cv2
import numpy as np
import pytest

import codesfm
from codesfm.io import load_manifest, load_manifest_frames
from codesfm.slam import load_trajectory
from scipy.spatial.transform import Rotation

from decodergen import BasisSpec, FixtureSpec, emit_fixture, pose_rt
from decodergen.basis import pca_basis
from decodergen.fixtures import _pca_columns, build_scene
from decodergen.render import render_scene
from decodergen.scene import standard_calib


def small_spec(**kw):
    base = dict(n_frames=2, motion="lateral", step=0.1, width=64, height=48,
                basis=BasisSpec(kind="dct2d", code_size=6), seed=7)
    base.update(kw)
    return FixtureSpec(**base)


def test_emitted_dataset_loads_through_the_consumer(tmp_path):
    report = emit_fixture(tmp_path, small_spec())
    intr, params, frames = load_manifest_frames(load_manifest(tmp_path / "manifest.json"))
    assert len(frames) == 2
    assert intr.width == 64 and intr.height == 48
    assert params.a == pytest.approx(2.0)
    for rec in frames:
        assert rec["pyramid"].levels[0].shape == (48, 64)
        assert rec["decoder"] is not None
        assert rec["gt_mask"].all()
    traj = load_trajectory(tmp_path / "gt_poses.txt")
    assert len(traj) == 2
    base = np.linalg.norm(traj[1][1].translation - traj[0][1].translation)
    assert base == pytest.approx(0.1, abs=1e-9)
    assert all(f["fit_rms"] < 0.01 for f in report["frames"])


def test_decoder_bytes_survive_the_consumer_round_trip(tmp_path):
    emit_fixture(tmp_path, small_spec())
    src = tmp_path / "decoders" / "f00.csdm"
    raw = src.read_bytes()
    model = codesfm.load_decoder(src)
    back = tmp_path / "back.csdm"
    codesfm.save_decoder(model, back)
    assert back.read_bytes() == raw  # both writers, bit for bit


def test_recorded_code_reconstructs_the_rendered_depth(tmp_path):
    report = emit_fixture(tmp_path, small_spec(seed=21))
    model = codesfm.load_decoder(tmp_path / "decoders" / "f00.csdm")
    code = np.asarray(report["frames"][0]["code_gt"])
    prox = codesfm.decode_proximity(model, code, 0)
    raw = cv2.imread(str(tmp_path / "depth" / "f00.png"), cv2.IMREAD_UNCHANGED)
    d_png = raw.astype(np.float64) / 1000.0
    p_png = 2.0 / (d_png + 2.0)
    rms = np.sqrt(np.mean((prox - p_png) ** 2))
    assert rms < 0.01
    zero = codesfm.decode_proximity(model, np.zeros(6), 0)
    assert np.sqrt(np.mean((zero - p_png) ** 2)) > 2 * rms


def test_motion_patterns_shape_the_ground_truth(tmp_path):
    emit_fixture(tmp_path / "rot", small_spec(motion="rotation-only",
                                              step=0.03, n_frames=3))
    traj = load_trajectory(tmp_path / "rot" / "gt_poses.txt")
    for _, p in traj:
        assert np.linalg.norm(p.translation) < 1e-12
    ang = Rotation.from_matrix(traj[2][1].rotation).magnitude()
    assert ang == pytest.approx(0.06, abs=1e-9)

    emit_fixture(tmp_path / "fwd", small_spec(motion="forward"))
    traj = load_trajectory(tmp_path / "fwd" / "gt_poses.txt")
    step = traj[1][1].translation - traj[0][1].translation
    assert step[2] == pytest.approx(0.1, abs=1e-9)
    assert np.abs(step[:2]).max() < 1e-12


def test_noise_spares_the_reference_frame(tmp_path):
    spec = small_spec(noise_sigma=0.02, seed=4)
    emit_fixture(tmp_path, spec)
    scene = build_scene(spec)
    calib = standard_calib(64, 48)
    clean0, _ = render_scene(scene, scene.trajectory[0], calib)
    img0 = cv2.imread(str(tmp_path / "frames" / "f00.png"),
                      cv2.IMREAD_UNCHANGED).astype(np.float64) / 65535.0
    img1 = cv2.imread(str(tmp_path / "frames" / "f01.png"),
                      cv2.IMREAD_UNCHANGED).astype(np.float64) / 65535.0
    clean1, _ = render_scene(scene, scene.trajectory[1], calib)
    assert np.abs(img0 - clean0).max() < 1e-4  # quantization only
    assert np.std(img1 - clean1) > 0.01


def test_explicit_pose_list_overrides_the_motion_pattern(tmp_path):
    poses = [np.eye(4), pose_rt([0.0, np.deg2rad(5.0), 0.0], [0.02, 0, 0])]
    emit_fixture(tmp_path, small_spec(poses=poses))
    traj = load_trajectory(tmp_path / "gt_poses.txt")
    assert traj[1][1].translation[0] == pytest.approx(0.02, abs=1e-9)
    ang = Rotation.from_matrix(traj[1][1].rotation).magnitude()
    assert np.rad2deg(ang) == pytest.approx(5.0, abs=1e-6)


def test_pca_fixture_emits_and_explains_variance(tmp_path):
    spec = small_spec(basis=BasisSpec(kind="pca", code_size=6), seed=5)
    report = emit_fixture(tmp_path, spec)
    assert all(f["fit_rms"] < 0.01 for f in report["frames"])
    model = codesfm.load_decoder(tmp_path / "decoders" / "f00.csdm")
    assert model.code_size == 6


def test_pca_of_rendered_proximities_concentrates_variance():
    # the latent view of this scene family is low rank: most variance in few axes
    spec = FixtureSpec(width=64, height=48, seed=12, n_frames=2)
    scene = build_scene(spec)
    calib = standard_calib(64, 48)
    rng = np.random.default_rng(3)
    samples = []
    for _ in range(150):
        t = spec.step * rng.uniform(-1.5, 1.5, 3) * [1, 0.3, 0.3]
        img, dep = render_scene(scene, pose_rt([0, 0, 0], t), calib)
        samples.append((2.0 / (dep + 2.0)).ravel())
    cols, ratio = pca_basis(np.array(samples), 128)
    assert ratio[:128].sum() >= 0.90


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "decodergen.cli", *args],
                          capture_output=True, text=True)


def test_cli_fixture_command(tmp_path):
    out = tmp_path / "ds"
    r = run_cli("fixture", "--out", str(out), "--frames", "2",
                "--width", "64", "--height", "48", "--code-size", "6",
                "--seed", "3")
    assert r.returncode == 0, r.stderr
    assert "fixture: 2 frames" in r.stdout
    assert (out / "manifest.json").exists()
    load_manifest_frames(load_manifest(out / "manifest.json"))


def test_cli_from_depth_command(tmp_path):
    emit_fixture(tmp_path / "ds", small_spec())
    out = tmp_path / "solo.csdm"
    r = run_cli("from-depth",
                "--image", str(tmp_path / "ds" / "frames" / "f00.png"),
                "--depth", str(tmp_path / "ds" / "depth" / "f00.png"),
                "--out", str(out), "--code-size", "6")
    assert r.returncode == 0, r.stderr
    assert "fit rms" in r.stdout
    model = codesfm.load_decoder(out)
    assert model.code_size == 6
    assert model.levels[0].width == 64


def test_cli_usage_and_data_errors(tmp_path):
    assert run_cli().returncode == 1
    assert run_cli("fixture").returncode == 1  # --out is required
    r = run_cli("fixture", "--out", str(tmp_path / "x"), "--width", "8",
                "--height", "8", "--code-size", "999")
    assert r.returncode == 2
    assert "error" in r.stderr
    r = run_cli("from-depth", "--image", str(tmp_path / "no.png"),
                "--depth", str(tmp_path / "no.png"),
                "--out", str(tmp_path / "o.csdm"))
    assert r.returncode == 2
