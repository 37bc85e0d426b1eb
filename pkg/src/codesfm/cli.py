"""Command-line front door.

Exit codes: 0 success, 1 usage error, 2 data error (missing or
malformed inputs), 3 solver failure (divergence, lost tracking,
insufficient overlap, failed checks).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import errors, io
from .decoder import load_decoder
from .fdcheck import check_pair, suite_passes
from .geometry import ProximityParams, Se3Pose, proximity_to_depth, se3_exp
from .sfm import Keyframe, SfmOptions, build_full_pairs, build_master_pairs, export_reconstruction, run_sfm
from .slam import Frame, SlamConfig, export_trajectory, initialize, process_frame
from .tracker import TrackingOptions, track
from .warp import ResidualOptions

DATA_ERRORS = (
    errors.IoError,
    errors.FormatError,
    errors.UnsupportedFormat,
    errors.DimensionMismatch,
    errors.UnknownFrame,
    errors.CodeSizeMismatch,
    errors.LevelOutOfRange,
    errors.ProximityOutOfRange,
    errors.NegativeDepth,
    errors.NonPositiveDepth,
)
SOLVER_ERRORS = (
    errors.DivergenceDetected,
    errors.IndefiniteSystem,
    errors.SingularBlock,
    errors.InsufficientOverlap,
    errors.InitializationFailed,
    errors.TrackingLost,
    errors.UnknownVariable,
)


def _pose_json(pose: Se3Pose):
    from scipy.spatial.transform import Rotation

    q = Rotation.from_matrix(pose.rotation).as_quat()
    return {"t": [float(x) for x in pose.translation],
            "q": [float(x) for x in q]}


def _load_frames_dir(frames_dir, decoders_dir, intrinsics):
    pngs = sorted(f for f in os.listdir(frames_dir) if f.endswith(".png"))
    if len(pngs) < 2:
        raise errors.IoError("need at least two PNG frames in %r" % frames_dir)
    keyframes = {}
    for name in pngs:
        fid = os.path.splitext(name)[0]
        pyr = io.load_image_pyramid(os.path.join(frames_dir, name))
        dec = io.find_decoder(decoders_dir, fid)
        keyframes[fid] = Keyframe(fid, pyr, dec, intrinsics)
    return keyframes


def _resolve_master(master, frame_ids):
    ids = list(frame_ids)
    if master in ids:
        return master
    try:
        return ids[int(master)]
    except (ValueError, IndexError):
        raise errors.UnknownFrame("master %r is neither a frame id nor an index" % master)


def cmd_sfm(args):
    intrinsics, params = io.load_calibration(args.calib)
    frames = _load_frames_dir(args.frames, args.decoders, intrinsics)
    master = _resolve_master(args.master, frames)
    if args.full_pairs:
        graph = build_full_pairs(list(frames))
    else:
        graph = build_master_pairs(master, list(frames))
    opts = SfmOptions(params=params, max_iters=args.max_iters)
    result = run_sfm(frames, graph, opts)

    os.makedirs(args.out, exist_ok=True)
    poses = {fid: _pose_json(p) for fid, p in result.poses.items()}
    with open(os.path.join(args.out, "poses.json"), "w") as f:
        json.dump({"order": list(result.poses), "poses": poses}, f, indent=2)
    io.write_codes_bin(
        os.path.join(args.out, "codes.bin"),
        [result.codes[fid] for fid in result.poses],
    )
    with open(os.path.join(args.out, "report.json"), "w") as f:
        json.dump(
            {
                "stages": [json.loads(r.to_json()) for r in result.reports],
                "overlap": {str(k): v for k, v in result.overlap.items()},
                "rmse": {str(k): v for k, v in result.rmse.items()},
            },
            f,
            indent=2,
        )
    if args.ply:
        export_reconstruction(result, os.path.join(args.out, "cloud.ply"))
    print("sfm: %d frames, %d accepted iterations" % (len(frames), result.total_accepted))
    return 0


def cmd_track(args):
    intrinsics, params = io.load_calibration(args.calib)
    seq = io.load_sequence_dir(args.sequence)
    if not 0 <= args.keyframe < len(seq):
        raise errors.UnknownFrame("keyframe index %d out of range" % args.keyframe)
    ref_path, _ = seq[args.keyframe]
    ref_id = os.path.splitext(os.path.basename(ref_path))[0]
    ref = Keyframe(
        ref_id,
        io.load_image_pyramid(ref_path),
        io.find_decoder(args.decoders, ref_id),
        intrinsics,
    )
    opts = TrackingOptions(
        estimate_affine=args.affine, use_finest=args.use_finest,
        params=params,
    )
    records = []
    for i, (path, ts) in enumerate(seq):
        if i == args.keyframe:
            continue
        state = track(io.load_image_pyramid(path), ref, ref.pose, opts)
        records.append(
            {
                "frame": os.path.splitext(os.path.basename(path))[0],
                "timestamp": ts,
                "status": state.convergence.value,
                "inlier_fraction": state.inlier_fraction,
                "residual_rms": state.residual_rms,
                "pose": _pose_json(state.current_pose_estimate),
            }
        )
    with open(args.out, "w") as f:
        json.dump({"reference": ref_id, "frames": records}, f, indent=2)
    print("track: %d frames against %s" % (len(records), ref_id))
    return 0


def cmd_slam(args):
    intrinsics, params = io.load_calibration(args.calib)
    config = SlamConfig(params=params)
    if args.config:
        with open(args.config) as f:
            overrides = json.load(f)
        for key in ("max_keyframes", "baseline_threshold", "map_opt_iters", "init_iters"):
            if key in overrides:
                setattr(config, key, overrides[key])
    seq = io.load_sequence_dir(args.sequence)
    if len(seq) < 2:
        raise errors.IoError("sequence needs at least two frames")

    def make_frame(path, ts):
        fid = os.path.splitext(os.path.basename(path))[0]
        return Frame(
            id=fid,
            pyramid=io.load_image_pyramid(path),
            timestamp=ts,
            decoder=io.find_decoder(args.decoders, fid),
        )

    slam_map = initialize(
        make_frame(*seq[0]), make_frame(*seq[1]), intrinsics, config
    )
    n_kf = 0
    for path, ts in seq[2:]:
        fid = os.path.splitext(os.path.basename(path))[0]
        frame = Frame(id=fid, pyramid=io.load_image_pyramid(path), timestamp=ts)
        try:
            frame.decoder = io.find_decoder(args.decoders, fid)
        except errors.IoError:
            pass  # only needed if the frame gets promoted
        result = process_frame(slam_map, frame)
        n_kf += result.value == "keyframe_added"
    export_trajectory(slam_map, args.out)
    print(
        "slam: %d frames, %d keyframes added, window %d"
        % (len(seq), n_kf, len(slam_map.keyframes))
    )
    return 0


def cmd_check_jacobians(args):
    manifest = io.load_manifest(args.manifest)
    intrinsics, params, frames = io.load_manifest_frames(manifest)
    with_dec = [f for f in frames if f["decoder"] is not None]
    if len(with_dec) < 2:
        raise errors.FormatError("manifest needs two frames with decoders")
    fa, fb = with_dec[0], with_dec[1]

    rng = np.random.default_rng(7)
    k_a = fa["decoder"].code_size
    k_b = fb["decoder"].code_size
    c_a = 0.05 * rng.standard_normal(k_a)
    c_b = 0.05 * rng.standard_normal(k_b)
    T_A = Se3Pose.identity()
    T_B = se3_exp(np.concatenate([0.01 * rng.standard_normal(3),
                                  0.01 * rng.standard_normal(3)]))

    lv = args.level
    results = check_pair(
        {"image": fa["pyramid"].levels[lv], "intrinsics": intrinsics.scaled(lv),
         "decoder": fa["decoder"]},
        {"image": fb["pyramid"].levels[lv], "intrinsics": intrinsics.scaled(lv),
         "decoder": fb["decoder"]},
        T_A, T_B, c_a, c_b, ResidualOptions(), params,
        level=lv, step=args.step, tol=args.tol,
    )
    for r in results:
        print(r.line())
    ok = suite_passes(results, args.min_pass)
    print("suite %s (tol %.1e, min pass %.0f%%)"
          % ("PASS" if ok else "FAIL", args.tol, 100 * args.min_pass))
    return 0 if ok else 3


def cmd_decode(args):
    model = load_decoder(args.decoder)
    if args.code:
        if args.code.endswith(".npy"):
            code = np.load(args.code)
        else:
            code = np.loadtxt(args.code).reshape(-1)
    else:
        code = np.zeros(model.code_size)
    from .decoder import decode_proximity

    prox = decode_proximity(model, code, args.level)
    os.makedirs(args.out, exist_ok=True)
    np.save(os.path.join(args.out, "proximity.npy"), prox)
    params = ProximityParams(a=args.proximity_a)
    io.write_depth_png16(
        os.path.join(args.out, "depth_mm.png"), proximity_to_depth(prox, params)
    )
    print("decode: level %d, %dx%d" % (args.level, prox.shape[1], prox.shape[0]))
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="code-sfm",
        description="Dense SfM/SLAM with compact-code depth decoders.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("sfm", help="joint pose/code optimization over frames")
    ps.add_argument("--frames", required=True, help="directory of greyscale PNGs")
    ps.add_argument("--decoders", required=True, help="directory of .csdm artifacts")
    ps.add_argument("--calib", required=True)
    ps.add_argument("--master", default="0", help="master frame id or index")
    ps.add_argument("--out", required=True)
    ps.add_argument("--max-iters", type=int, default=50)
    ps.add_argument("--full-pairs", action="store_true")
    ps.add_argument("--ply", action="store_true", help="also write cloud.ply")
    ps.set_defaults(func=cmd_sfm)

    pt = sub.add_parser("track", help="track a sequence against one keyframe")
    pt.add_argument("--sequence", required=True)
    pt.add_argument("--keyframe", type=int, default=0)
    pt.add_argument("--decoders", required=True)
    pt.add_argument("--calib", required=True)
    pt.add_argument("--out", required=True)
    pt.add_argument("--affine", action="store_true")
    pt.add_argument("--use-finest", action="store_true")
    pt.set_defaults(func=cmd_track)

    pl = sub.add_parser("slam", help="run the sliding-window pipeline")
    pl.add_argument("--sequence", required=True)
    pl.add_argument("--decoders", required=True)
    pl.add_argument("--calib", required=True)
    pl.add_argument("--config", default=None, help="JSON config overrides")
    pl.add_argument("--out", required=True, help="trajectory output path")
    pl.set_defaults(func=cmd_slam)

    pc = sub.add_parser("check-jacobians", help="finite-difference suite")
    pc.add_argument("--manifest", required=True)
    pc.add_argument("--level", type=int, default=0)
    pc.add_argument("--step", type=float, default=1e-4)
    pc.add_argument("--tol", type=float, default=1e-4)
    pc.add_argument("--min-pass", type=float, default=0.95)
    pc.set_defaults(func=cmd_check_jacobians)

    pd = sub.add_parser("decode", help="dump decoded proximity/depth")
    pd.add_argument("--decoder", required=True)
    pd.add_argument("--code", default=None, help=".npy or text floats; default zero")
    pd.add_argument("--level", type=int, default=0)
    pd.add_argument("--proximity-a", type=float, default=2.0)
    pd.add_argument("--out", required=True)
    pd.set_defaults(func=cmd_decode)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        print("data error: %s" % exc, file=sys.stderr)
        return 2
    except OSError as exc:
        # unreadable/unwritable paths reported the same way as bad content
        print("data error: %s" % exc, file=sys.stderr)
        return 2
    except SOLVER_ERRORS as exc:
        print("solver failure: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
