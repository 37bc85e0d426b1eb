"""Pose-only localization of a live frame against a keyframe.

Coarse-to-fine photometric alignment: the keyframe's decoded depth
warps its pixels into the live image, and only the live camera's 6-DoF
pose moves. No geometric cost (the live frame has no decoder), codes
and the keyframe pose stay frozen. Optionally a per-track affine
(gain, bias) pair absorbs illumination changes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import ProximityParams, Se3Pose, se3_retract
from .solver import BoundBlock, SolverOptions, VariableLayout, optimize
from .warp import FrameLevel, ResidualOptions, evaluate_level


class Convergence(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    LOST = "lost"


@dataclass
class TrackingOptions:
    levels: tuple = (3, 2, 1)  # coarsest first; level 0 costs 4x level 1
    use_finest: bool = False  # append level 0 refinement
    iters_per_level: int = 12
    estimate_affine: bool = False
    lost_inlier_fraction: float = 0.3
    max_residual_rms: float = float("inf")
    residual: ResidualOptions = field(default_factory=ResidualOptions)
    params: ProximityParams = field(default_factory=ProximityParams)
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class TrackingState:
    reference_keyframe_id: object
    current_pose_estimate: Se3Pose  # world-from-live
    convergence: Convergence
    inlier_fraction: float
    residual_rms: float
    gain: float
    bias: float
    reports: list


class _TrackProblem:
    """Single-level alignment problem: one pose, optionally one affine
    pair. Frame data is prepared once; only the pose state changes."""

    def __init__(self, fl_ref, fl_live, ref_pose, init_pose, affine, opts):
        self.fl_ref = fl_ref
        self.fl_live = fl_live
        self.ref_pose = ref_pose
        self.pose = init_pose
        self.affine = affine  # (gain-1, bias) ndarray or None
        self.opts = opts
        self.code_prior_weight = 0.0
        self.layout = VariableLayout().add("pose", "pose")
        if affine is not None:
            self.layout.add("affine", "affine")

    def priors(self):
        return ()

    def values(self):
        out = {"pose": self.pose}
        if self.affine is not None:
            out["affine"] = self.affine
        return out

    def snapshot(self):
        return (self.pose, None if self.affine is None else self.affine.copy())

    def restore(self, snap):
        self.pose, self.affine = snap

    def apply_step(self, delta):
        sl = self.layout.slice_of("pose")
        self.pose = se3_retract(self.pose, delta[sl])
        if self.affine is not None:
            self.affine = self.affine + delta[self.layout.slice_of("affine")]

    def residual_options(self):
        ropts = self.opts.residual
        if self.affine is not None:
            ropts = replace(
                ropts, affine_gain=1.0 + self.affine[0], affine_bias=self.affine[1]
            )
        return ropts

    def evaluate(self, want_jacobians=True):
        blk = evaluate_level(
            self.fl_ref, self.fl_live, self.ref_pose, self.pose,
            self.residual_options(), self.opts.params, "photo", want_jacobians,
        )
        return [
            BoundBlock(
                block=blk,
                pose_B="pose",
                affine="affine" if self.affine is not None else None,
            )
        ]


def track(frame_pyramid, ref, init: Se3Pose = None,
          opts: TrackingOptions = None) -> TrackingState:
    """Align a live image pyramid to keyframe `ref`, coarsest level
    first. Returns the world-from-live pose estimate; Lost is a state,
    not an error. The keyframe is read-only throughout."""
    opts = opts or TrackingOptions()
    pose = init if init is not None else ref.pose
    affine = np.zeros(2) if opts.estimate_affine else None
    levels = tuple(opts.levels) + ((0,) if opts.use_finest else ())

    reports = []
    problem = None
    for lv in levels:
        fl_ref = FrameLevel(
            ref.pyramid.levels[lv], ref.intrinsics.scaled(lv), ref.decoder,
            ref.code, build_code_jacobian=False,
        )
        fl_live = FrameLevel(frame_pyramid.levels[lv], ref.intrinsics.scaled(lv))
        problem = _TrackProblem(fl_ref, fl_live, ref.pose, pose, affine, opts)
        sopts = replace(opts.solver, max_iters=opts.iters_per_level)
        reports.append(optimize(problem, sopts))
        pose = problem.pose
        affine = problem.affine

    blk = problem.evaluate(want_jacobians=False)[0].block
    inlier = blk.n_valid / blk.valid_mask.size
    r = blk.residuals[blk.valid_mask]
    rms = float(np.sqrt(np.mean(r * r))) if r.size else float("inf")

    if inlier < opts.lost_inlier_fraction or rms > opts.max_residual_rms:
        conv = Convergence.LOST
    elif reports[-1].termination in ("converged_cost", "converged_step"):
        conv = Convergence.CONVERGED
    else:
        conv = Convergence.MAX_ITERS
    gain = 1.0 + (affine[0] if affine is not None else 0.0)
    bias = float(affine[1]) if affine is not None else 0.0
    return TrackingState(
        reference_keyframe_id=ref.id,
        current_pose_estimate=pose,
        convergence=conv,
        inlier_fraction=float(inlier),
        residual_rms=rms,
        gain=float(gain),
        bias=bias,
        reports=reports,
    )


def constant_velocity_prediction(pose_prev: Se3Pose, pose_prev2: Se3Pose) -> Se3Pose:
    """Extrapolate the next world-from-frame pose from the last two."""
    step = pose_prev.compose(pose_prev2.inverse())
    return step.compose(pose_prev)
