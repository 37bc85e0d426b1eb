"""Finite-difference verification of the analytic residual Jacobians.

Central differences of the raw residual vector (weights play no role:
they are IRLS factors, not part of the differentiated function) against
the analytic rows, per variable group. Pose perturbations reuse the
prepared frame data; code perturbations re-decode the proximity maps.
Pixels are compared only where the validity mask holds at the center
and at both perturbed evaluations, since a pixel entering or leaving
the sampling box is not differentiable.

Relative error uses max(|fd|, |analytic|, floor) as denominator, with
floor = 1e-6 of the group's largest analytic entry, so pixels whose
true derivative is essentially zero compare against the group's scale
instead of amplifying roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import se3_retract
from .warp import FrameLevel, evaluate_level


@dataclass
class CheckResult:
    kind: str  # photo | geo
    variable: str  # translation_A, rotation_A, ..., code_A, code_B
    pass_fraction: float
    max_rel_err: float
    n_pixels: int

    def line(self):
        return "%-5s %-13s pass %7.3f%%  max rel err %.3e  (%d px)" % (
            self.kind,
            self.variable,
            100.0 * self.pass_fraction,
            self.max_rel_err,
            self.n_pixels,
        )


def _levels(frame, code, build_jac):
    return FrameLevel(
        frame["image"], frame["intrinsics"], frame["decoder"], code,
        build_code_jacobian=build_jac,
    )


def _eval(fl_a, fl_b, T_A, T_B, opts, params, kind, want_jac=False):
    return evaluate_level(fl_a, fl_b, T_A, T_B, opts, params, kind, want_jac)


def check_pair(frame_a, frame_b, T_A, T_B, c_a, c_b, opts, params,
               level=0, step=1e-4, tol=1e-4):
    """Run the full suite on one ordered pair at one pyramid level.

    frame_a/frame_b are dicts with keys image (the level image),
    intrinsics (scaled to the level), decoder. Returns CheckResults for
    translation/rotation of both poses and both codes, photometric and
    geometric."""
    packs = []
    for fr, c in ((frame_a, c_a), (frame_b, c_b)):
        packs.append({
            "image": fr["image"],
            "intrinsics": fr["intrinsics"],
            "decoder": fr["decoder"],
            "code": np.asarray(c, dtype=np.float64),
        })
    fl_a = _levels(packs[0], packs[0]["code"], True)
    fl_b = _levels(packs[1], packs[1]["code"], True)

    results = []
    for kind in ("photo", "geo"):
        center = _eval(fl_a, fl_b, T_A, T_B, opts, params, kind, want_jac=True)

        def fd_columns(perturb, n_dirs):
            cols, valids = [], []
            for k in range(n_dirs):
                e = np.zeros(n_dirs)
                e[k] = step
                bp = perturb(e)
                bm = perturb(-e)
                cols.append((bp.residuals - bm.residuals) / (2.0 * step))
                valids.append(bp.valid_mask & bm.valid_mask)
            return np.stack(cols, axis=-1), np.stack(valids, axis=-1)

        def pose_perturber(side):
            def go(e):
                Ta = se3_retract(T_A, e) if side == "A" else T_A
                Tb = se3_retract(T_B, e) if side == "B" else T_B
                return _eval(fl_a, fl_b, Ta, Tb, opts, params, kind)
            return go

        def code_perturber(side):
            def go(e):
                if side == "A":
                    fa = _levels(packs[0], packs[0]["code"] + e, False)
                    return _eval(fa, fl_b, T_A, T_B, opts, params, kind)
                fb = _levels(packs[1], packs[1]["code"] + e, False)
                return _eval(fl_a, fb, T_A, T_B, opts, params, kind)
            return go

        groups = [
            ("translation_A", center.J_pose_A[:, 0:3],
             lambda e: pose_perturber("A")(np.concatenate([e, np.zeros(3)]))),
            ("rotation_A", center.J_pose_A[:, 3:6],
             lambda e: pose_perturber("A")(np.concatenate([np.zeros(3), e]))),
            ("translation_B", center.J_pose_B[:, 0:3],
             lambda e: pose_perturber("B")(np.concatenate([e, np.zeros(3)]))),
            ("rotation_B", center.J_pose_B[:, 3:6],
             lambda e: pose_perturber("B")(np.concatenate([np.zeros(3), e]))),
            ("code_A", center.J_code_A, code_perturber("A")),
        ]
        if center.J_code_B is not None:
            groups.append(("code_B", center.J_code_B, code_perturber("B")))

        for name, analytic, perturb in groups:
            fd, valid_dirs = fd_columns(perturb, analytic.shape[1])
            valid = center.valid_mask & valid_dirs.all(axis=-1)
            an = analytic[valid]
            fd = fd[valid]
            floor = 1e-6 * max(np.abs(an).max() if an.size else 0.0, 1e-12)
            denom = np.maximum(np.maximum(np.abs(an), np.abs(fd)), floor)
            rel = np.abs(fd - an) / denom
            per_pixel_ok = (rel <= tol).all(axis=-1)
            results.append(
                CheckResult(
                    kind=kind,
                    variable=name,
                    pass_fraction=float(per_pixel_ok.mean()) if an.size else 1.0,
                    max_rel_err=float(rel.max()) if an.size else 0.0,
                    n_pixels=int(valid.sum()),
                )
            )
    return results


def suite_passes(results, min_pass=0.95):
    return all(r.pass_fraction >= min_pass for r in results)
