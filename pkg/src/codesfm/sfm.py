"""Joint pose/code estimation over a small set of frames.

A master keyframe is paired with every other frame; photometric and
geometric residuals run in both directions of each pair, across pyramid
levels, and a damped Gauss-Newton solve updates all free poses and
codes together. Codes start at zero (the decoder's single-view guess)
and poses at identity. The first frame is gauge-fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .decoder import DecoderModel, decode_active_mask, decode_proximity
from .errors import (
    DimensionMismatch,
    InsufficientOverlap,
    UnknownFrame,
)
from .geometry import CameraIntrinsics, ProximityParams, Se3Pose, se3_retract
from .solver import (
    BoundBlock,
    SolverOptions,
    VariableLayout,
    optimize,
)
from .warp import (
    FrameLevel,
    ImagePyramid,
    ResidualOptions,
    evaluate_level,
    level_weights,
)


class Keyframe:
    """A frame the map keeps: images, decoder, and the current pose and
    code estimates. Pose maps frame coordinates into the world."""

    def __init__(self, frame_id, pyramid: ImagePyramid, decoder: DecoderModel,
                 intrinsics: CameraIntrinsics, pose=None, code=None, timestamp=None):
        for lvl, img in zip(decoder.levels, pyramid.levels):
            if (lvl.height, lvl.width) != img.shape:
                raise DimensionMismatch(
                    "decoder level %dx%d does not match image %dx%d"
                    % (lvl.width, lvl.height, img.shape[1], img.shape[0])
                )
        h, w = pyramid.levels[0].shape
        if (intrinsics.width, intrinsics.height) != (w, h):
            raise DimensionMismatch("intrinsics do not match the image size")
        if code is None:
            code = np.zeros(decoder.code_size)
        code = np.asarray(code, dtype=np.float64)
        if code.shape != (decoder.code_size,):
            raise DimensionMismatch("code size does not match the decoder")
        self.id = frame_id
        self.pyramid = pyramid
        self.decoder = decoder
        self.intrinsics = intrinsics
        self.pose = pose if pose is not None else Se3Pose.identity()
        self.code = code
        self.timestamp = timestamp


@dataclass(frozen=True)
class PairGraph:
    pairs: tuple  # (frame_a_id, frame_b_id, use_photo, use_geo)
    master_id: object = None

    def __post_init__(self):
        for a, b, _, _ in self.pairs:
            if a == b:
                raise ValueError("self-pair %r" % (a,))


def build_master_pairs(master_id, frame_ids) -> PairGraph:
    """One photo+geo pair per non-master frame, evaluated both ways."""
    ids = list(frame_ids)
    if master_id not in ids:
        raise UnknownFrame("master %r not among frames" % (master_id,))
    pairs = tuple((master_id, f, True, True) for f in ids if f != master_id)
    return PairGraph(pairs=pairs, master_id=master_id)


def build_full_pairs(frame_ids) -> PairGraph:
    ids = list(frame_ids)
    pairs = tuple(
        (ids[i], ids[j], True, True)
        for i in range(len(ids))
        for j in range(i + 1, len(ids))
    )
    return PairGraph(pairs=pairs)


@dataclass
class SfmOptions:
    residual: ResidualOptions = field(default_factory=ResidualOptions)
    params: ProximityParams = field(default_factory=ProximityParams)
    max_iters: int = 50
    coarse_fraction: float = 1.0 / 3.0
    levels_coarse: tuple = (2, 3)
    levels_fine: tuple = (0, 1, 2, 3)
    code_prior_weight: float = 1e-2
    gauge_fix: object = None  # frame id; default: first frame
    estimate_affine: bool = False
    solver: SolverOptions = field(default_factory=SolverOptions)
    min_overlap: float = 0.2
    gt_proximity: dict = None  # frame id -> level-0 proximity, for reporting


class SfmProblem:
    """Window problem over keyframe poses and codes (and per-direction
    affine gain/bias when enabled), in the shape `solver.optimize`
    expects."""

    def __init__(self, frames, graph: PairGraph, opts: SfmOptions, levels,
                 gauge_fix_id, priors=()):
        self.frames = dict(frames)
        self.graph = graph
        self.opts = opts
        self.levels = tuple(levels)
        self.gauge_fix_id = gauge_fix_id
        self._priors = list(priors)
        self.code_prior_weight = opts.code_prior_weight
        self.affines = {}

        self.layout = VariableLayout()
        for fid, kf in self.frames.items():
            if fid != gauge_fix_id:
                self.layout.add(("pose", fid), "pose")
            self.layout.add(("code", fid), "code", kf.decoder.code_size)
        self.directed = []
        for a, b, photo, geo in graph.pairs:
            if a not in self.frames or b not in self.frames:
                raise UnknownFrame("pair (%r, %r) references unknown frame" % (a, b))
            for ra, rb in ((a, b), (b, a)):
                self.directed.append((ra, rb, photo, geo))
                if opts.estimate_affine and photo:
                    self.affines[(ra, rb)] = np.zeros(2)  # gain-1, bias
                    self.layout.add(("affine", ra, rb), "affine")

    def priors(self):
        return self._priors

    def values(self):
        out = {}
        for e in self.layout:
            kind, key = e.var_id[0], e.var_id[1:]
            if kind == "pose":
                out[e.var_id] = self.frames[key[0]].pose
            elif kind == "code":
                out[e.var_id] = self.frames[key[0]].code
            else:
                out[e.var_id] = self.affines[key]
        return out

    def snapshot(self):
        return (
            {fid: kf.pose for fid, kf in self.frames.items()},
            {fid: kf.code.copy() for fid, kf in self.frames.items()},
            {k: v.copy() for k, v in self.affines.items()},
        )

    def restore(self, snap):
        poses, codes, affines = snap
        for fid, kf in self.frames.items():
            kf.pose = poses[fid]
            kf.code = codes[fid]
        self.affines = {k: v.copy() for k, v in affines.items()}

    def apply_step(self, delta):
        for e in self.layout:
            d = delta[e.offset : e.offset + e.size]
            kind, key = e.var_id[0], e.var_id[1:]
            if kind == "pose":
                kf = self.frames[key[0]]
                kf.pose = se3_retract(kf.pose, d)
            elif kind == "code":
                kf = self.frames[key[0]]
                kf.code = kf.code + d
            else:
                self.affines[key] = self.affines[key] + d

    def frame_levels(self, want_code_jacobian):
        fls = {}
        for fid, kf in self.frames.items():
            fls[fid] = {
                lv: FrameLevel(
                    kf.pyramid.levels[lv],
                    kf.intrinsics.scaled(lv),
                    kf.decoder,
                    kf.code,
                    build_code_jacobian=want_code_jacobian,
                )
                for lv in self.levels
            }
        return fls

    def evaluate(self, want_jacobians=True):
        fls = self.frame_levels(want_jacobians)
        lw = dict(zip(self.levels, level_weights(self.levels)))
        blocks = []
        for ra, rb, photo, geo in self.directed:
            kf_a, kf_b = self.frames[ra], self.frames[rb]
            ropts = self.opts.residual
            affine_id = None
            if (ra, rb) in self.affines:
                ga, bi = self.affines[(ra, rb)]
                ropts = replace(ropts, affine_gain=1.0 + ga, affine_bias=bi)
                affine_id = ("affine", ra, rb)
            pose_a = ("pose", ra) if ra != self.gauge_fix_id else None
            pose_b = ("pose", rb) if rb != self.gauge_fix_id else None
            kinds = [k for k, on in (("photo", photo), ("geo", geo)) if on]
            for lv in self.levels:
                for kind in kinds:
                    blk = evaluate_level(
                        fls[ra][lv], fls[rb][lv], kf_a.pose, kf_b.pose,
                        ropts, self.opts.params, kind, want_jacobians,
                    )
                    blocks.append(
                        BoundBlock(
                            block=blk,
                            pose_A=pose_a,
                            pose_B=pose_b,
                            code_A=("code", ra),
                            code_B=("code", rb),
                            affine=affine_id if kind == "photo" else None,
                            scale=lw[lv],
                        )
                    )
        return blocks


@dataclass
class SfmResult:
    poses: dict
    codes: dict
    proximity: dict  # frame id -> level-0 decoded proximity
    valid: dict  # frame id -> level-0 unclamped-pixel mask
    reports: list
    overlap: dict  # partner id -> fraction of master pixels warping validly
    rmse: dict  # frame id -> proximity RMSE vs ground truth, when given
    intrinsics: CameraIntrinsics
    params: ProximityParams

    @property
    def total_accepted(self):
        return sum(r.accepted for r in self.reports)


def _overlap_fractions(frames, master_id, partner_ids, opts):
    kf_m = frames[master_id]
    fl_m = FrameLevel(
        kf_m.pyramid.levels[0], kf_m.intrinsics.scaled(0), kf_m.decoder, kf_m.code,
        build_code_jacobian=False,
    )
    out = {}
    for pid in partner_ids:
        kf_p = frames[pid]
        fl_p = FrameLevel(
            kf_p.pyramid.levels[0], kf_p.intrinsics.scaled(0), kf_p.decoder,
            kf_p.code, build_code_jacobian=False,
        )
        blk = evaluate_level(
            fl_m, fl_p, kf_m.pose, kf_p.pose, opts.residual, opts.params,
            "photo", want_jacobians=False,
        )
        out[pid] = blk.n_valid / blk.valid_mask.size
    return out


def run_sfm(frames, graph: PairGraph, opts: SfmOptions = None) -> SfmResult:
    """Optimize all frames jointly, coarse levels first, then all levels.

    `frames` is an ordered mapping or list of Keyframes. Raises
    InsufficientOverlap if at convergence fewer than `min_overlap` of
    the master's pixels warp validly into every partner.
    """
    opts = opts or SfmOptions()
    if not isinstance(frames, dict):
        frames = {kf.id: kf for kf in frames}
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    gauge = opts.gauge_fix if opts.gauge_fix is not None else next(iter(frames))
    if gauge not in frames:
        raise UnknownFrame("gauge frame %r unknown" % (gauge,))

    coarse_iters = max(1, int(math.ceil(opts.max_iters * opts.coarse_fraction)))
    fine_iters = max(1, opts.max_iters - coarse_iters)
    reports = []
    for levels, iters in (
        (opts.levels_coarse, coarse_iters),
        (opts.levels_fine, fine_iters),
    ):
        problem = SfmProblem(frames, graph, opts, levels, gauge)
        sopts = replace(opts.solver, max_iters=iters)
        reports.append(optimize(problem, sopts))

    proximity, valid, rmse = {}, {}, {}
    for fid, kf in frames.items():
        proximity[fid] = decode_proximity(kf.decoder, kf.code, 0)
        valid[fid] = decode_active_mask(kf.decoder, kf.code, 0)
        if opts.gt_proximity and fid in opts.gt_proximity:
            err = proximity[fid] - opts.gt_proximity[fid]
            rmse[fid] = float(np.sqrt(np.mean(err * err)))

    overlap = {}
    if graph.master_id is not None:
        partners = [f for f in frames if f != graph.master_id]
        overlap = _overlap_fractions(frames, graph.master_id, partners, opts)
        if overlap and max(overlap.values()) < opts.min_overlap:
            raise InsufficientOverlap(
                "master overlaps no partner above %.0f%%" % (100 * opts.min_overlap)
            )

    any_kf = next(iter(frames.values()))
    return SfmResult(
        poses={fid: kf.pose for fid, kf in frames.items()},
        codes={fid: kf.code.copy() for fid, kf in frames.items()},
        proximity=proximity,
        valid=valid,
        reports=reports,
        overlap=overlap,
        rmse=rmse,
        intrinsics=any_kf.intrinsics,
        params=opts.params,
    )


def export_reconstruction(result: SfmResult, path, fmt="ply_pointcloud"):
    """Dump the reconstruction: a fused world-frame point cloud (one
    point per unclamped pixel, binary PLY) or per-frame 16-bit depth
    PNGs in millimetres (0 marks invalid)."""
    from . import io as sfm_io

    if fmt == "ply_pointcloud":
        points = [
            sfm_io.proximity_cloud(
                prox, result.valid[fid], result.intrinsics,
                result.poses[fid], result.params,
            )
            for fid, prox in result.proximity.items()
        ]
        cloud = np.concatenate(points, axis=0) if points else np.zeros((0, 3))
        sfm_io.write_ply(path, cloud)
    elif fmt == "depth_png16":
        import os

        os.makedirs(path, exist_ok=True)
        a = result.params.a
        for fid, prox in result.proximity.items():
            d = a * (1.0 - prox) / prox
            d = np.where(result.valid[fid], d, 0.0)
            sfm_io.write_depth_png16(os.path.join(path, "%s.png" % fid), d)
    else:
        raise ValueError("unknown export format %r" % (fmt,))
