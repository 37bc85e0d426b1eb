"""Alternating tracking and mapping over a sliding keyframe window.

Two frames bootstrap the map. Each new frame is tracked against the
newest keyframe; once its baseline exceeds a fraction of the scene's
median depth it becomes a keyframe itself and the whole window is
re-optimized jointly. When the window overflows, the oldest keyframe's
pose and code are folded into a linear prior by Schur complement, so
their constraints keep acting on the surviving variables.

Gauge handling: the oldest keyframe's pose stays frozen until the first
marginalization; from then on the prior anchors the window (the frozen
first pose is conditioned into it, making the prior's pose information
absolute rather than relative).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .decoder import decode_active_mask, decode_proximity
from .errors import InitializationFailed, InsufficientOverlap, DivergenceDetected
from .geometry import CameraIntrinsics, ProximityParams, Se3Pose
from .sfm import (
    Keyframe,
    SfmOptions,
    SfmProblem,
    build_full_pairs,
    build_master_pairs,
    run_sfm,
)
from .solver import SolverOptions, assemble, marginalize, optimize
from .tracker import (
    Convergence,
    TrackingOptions,
    constant_velocity_prediction,
    track,
)
from .warp import ResidualOptions


class ProcessResult(enum.Enum):
    TRACKED_ONLY = "tracked_only"
    KEYFRAME_ADDED = "keyframe_added"


@dataclass
class Frame:
    id: object
    pyramid: object
    timestamp: float
    decoder: object = None


@dataclass
class SlamConfig:
    max_keyframes: int = 4
    baseline_threshold: float = 0.05  # fraction of median scene depth
    map_opt_iters: int = 10
    init_iters: int = 40
    map_levels: tuple = (0, 1, 2, 3)
    decoder_provider: object = None  # callable(frame) -> DecoderModel
    tracking: TrackingOptions = field(default_factory=TrackingOptions)
    residual: ResidualOptions = field(default_factory=ResidualOptions)
    params: ProximityParams = field(default_factory=ProximityParams)
    code_prior_weight: float = 1e-2
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.max_keyframes < 2:
            raise ValueError("window must hold at least two keyframes")


@dataclass
class TrajectoryEntry:
    timestamp: float
    pose: Se3Pose = None  # tracked-only frames: pose frozen at track time
    keyframe: Keyframe = None  # keyframes: resolved at export (final pose)

    def resolve(self):
        return self.keyframe.pose if self.keyframe is not None else self.pose


@dataclass
class SlamMap:
    keyframes: list
    prior: object  # LinearPrior or None
    trajectory: list
    intrinsics: CameraIntrinsics
    config: SlamConfig


def _decoder_for(frame, config):
    if frame.decoder is not None:
        return frame.decoder
    if config.decoder_provider is not None:
        return config.decoder_provider(frame)
    raise ValueError("keyframe promotion needs a decoder artifact for %r" % frame.id)


def _sfm_options(config, levels):
    return SfmOptions(
        residual=config.residual,
        params=config.params,
        code_prior_weight=config.code_prior_weight,
        levels_fine=levels,
        solver=config.solver,
    )


def initialize(frame0: Frame, frame1: Frame, intrinsics, config=None) -> SlamMap:
    """Bootstrap from two frames: joint codes + relative pose, frame 0
    gauge-fixed at identity."""
    config = config or SlamConfig()
    kf0 = Keyframe(frame0.id, frame0.pyramid, _decoder_for(frame0, config),
                   intrinsics, timestamp=frame0.timestamp)
    kf1 = Keyframe(frame1.id, frame1.pyramid, _decoder_for(frame1, config),
                   intrinsics, timestamp=frame1.timestamp)
    opts = _sfm_options(config, config.map_levels)
    opts.max_iters = config.init_iters
    opts.gauge_fix = kf0.id
    opts.min_overlap = 0.3
    graph = build_master_pairs(kf0.id, [kf0.id, kf1.id])
    try:
        run_sfm({kf0.id: kf0, kf1.id: kf1}, graph, opts)
    except (DivergenceDetected, InsufficientOverlap) as exc:
        raise InitializationFailed(str(exc)) from exc
    traj = [
        TrajectoryEntry(timestamp=frame0.timestamp, keyframe=kf0),
        TrajectoryEntry(timestamp=frame1.timestamp, keyframe=kf1),
    ]
    return SlamMap(
        keyframes=[kf0, kf1], prior=None, trajectory=traj,
        intrinsics=intrinsics, config=config,
    )


def _median_depth(kf, params):
    p = decode_proximity(kf.decoder, kf.code, 0)
    mask = decode_active_mask(kf.decoder, kf.code, 0)
    p = p[mask] if mask.any() else p.reshape(-1)
    d = params.a * (1.0 - p) / p
    return float(np.median(d))


def _window_problem(slam_map, levels):
    config = slam_map.config
    frames = {kf.id: kf for kf in slam_map.keyframes}
    graph = build_full_pairs(list(frames))
    gauge = slam_map.keyframes[0].id if slam_map.prior is None else None
    priors = [slam_map.prior] if slam_map.prior is not None else []
    opts = _sfm_options(config, levels)
    return SfmProblem(frames, graph, opts, levels, gauge, priors=priors)


def _marginalize_oldest(slam_map):
    problem = _window_problem(slam_map, slam_map.config.map_levels)
    ne = assemble(
        problem.evaluate(want_jacobians=True),
        problem.layout,
        problem.priors(),
        problem.code_prior_weight,
        problem.values(),
    )
    oldest = slam_map.keyframes[0]
    drop = [("code", oldest.id)]
    if ("pose", oldest.id) in problem.layout:
        drop.append(("pose", oldest.id))
    slam_map.prior = marginalize(ne, problem.layout, drop, problem.values())
    slam_map.keyframes.pop(0)


def _optimize_window(slam_map):
    config = slam_map.config
    problem = _window_problem(slam_map, config.map_levels)
    sopts = replace(config.solver, max_iters=config.map_opt_iters)
    return optimize(problem, sopts)


def process_frame(slam_map: SlamMap, frame: Frame) -> ProcessResult:
    """Track one frame; promote it to a keyframe when its baseline to
    the newest keyframe exceeds the threshold. Raises TrackingLost."""
    config = slam_map.config
    ref = slam_map.keyframes[-1]
    if len(slam_map.trajectory) >= 2:
        init = constant_velocity_prediction(
            slam_map.trajectory[-1].resolve(), slam_map.trajectory[-2].resolve()
        )
    else:
        init = ref.pose
    state = track(frame.pyramid, ref, init, config.tracking)
    if state.convergence is Convergence.LOST:
        from .errors import TrackingLost

        raise TrackingLost(
            "frame %r: inlier fraction %.2f" % (frame.id, state.inlier_fraction)
        )
    pose = state.current_pose_estimate

    rel = ref.pose.inverse().compose(pose)
    baseline = float(np.linalg.norm(rel.translation))
    if baseline <= config.baseline_threshold * _median_depth(ref, config.params):
        slam_map.trajectory.append(
            TrajectoryEntry(timestamp=frame.timestamp, pose=pose)
        )
        return ProcessResult.TRACKED_ONLY

    kf = Keyframe(
        frame.id, frame.pyramid, _decoder_for(frame, config),
        slam_map.intrinsics, pose=pose, timestamp=frame.timestamp,
    )
    slam_map.keyframes.append(kf)
    slam_map.trajectory.append(TrajectoryEntry(timestamp=frame.timestamp, keyframe=kf))
    if len(slam_map.keyframes) > config.max_keyframes:
        _marginalize_oldest(slam_map)
    _optimize_window(slam_map)
    return ProcessResult.KEYFRAME_ADDED


def export_trajectory(slam_map: SlamMap, path):
    """Chronological 'timestamp tx ty tz qx qy qz qw' lines."""
    lines = []
    for entry in slam_map.trajectory:
        pose = entry.resolve()
        q = Rotation.from_matrix(pose.rotation).as_quat()
        t = pose.translation
        lines.append(
            "%.6f %.12f %.12f %.12f %.12f %.12f %.12f %.12f"
            % (entry.timestamp, t[0], t[1], t[2], q[0], q[1], q[2], q[3])
        )
    with open(path, "w") as f:
        f.write("\n".join(lines))
        if lines:
            f.write("\n")


def load_trajectory(path):
    """Inverse of export_trajectory: list of (timestamp, Se3Pose)."""
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = [float(x) for x in line.split()]
            ts, t, q = vals[0], vals[1:4], vals[4:8]
            R = Rotation.from_quat(q).as_matrix()
            out.append((ts, Se3Pose(R, np.asarray(t))))
    return out
