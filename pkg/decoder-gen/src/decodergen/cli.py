"""Command line front end.

Exit codes: 0 success, 1 usage error, 2 unusable inputs or an
impossible basis/image combination.
"""

from __future__ import annotations

import argparse
import sys

import cv2
import numpy as np

from .basis import BasisSpec, BasisTooLarge
from .fit import fit_linear_decoder
from .artifact import write_decoder
from .fixtures import FixtureSpec, emit_fixture


def cmd_fixture(args):
    spec = FixtureSpec(
        n_frames=args.frames, motion=args.motion, step=args.step,
        width=args.width, height=args.height, f_scale=args.f_scale,
        basis=BasisSpec(kind=args.basis, code_size=args.code_size,
                        smoothness=args.smoothness),
        seed=args.seed, noise_sigma=args.noise_sigma,
    )
    report = emit_fixture(args.out, spec)
    worst = max(f["fit_rms"] for f in report["frames"])
    print("fixture: %d frames (%s) -> %s, worst fit rms %.2e"
          % (args.frames, args.motion, args.out, worst))
    return 0


def cmd_from_depth(args):
    image = cv2.imread(args.image, cv2.IMREAD_UNCHANGED)
    if image is None:
        raise IOError("cannot read image %r" % args.image)
    if image.ndim == 3:
        image = image[..., :3].mean(axis=2)
    image = image.astype(np.float64)
    image /= 65535.0 if image.max() > 255 else 255.0
    raw = cv2.imread(args.depth, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError("cannot read depth %r" % args.depth)
    depth = raw.astype(np.float64) * args.depth_scale
    if depth.shape != image.shape:
        raise IOError("depth %s does not match image %s"
                      % (depth.shape, image.shape))

    spec = BasisSpec(kind=args.basis, code_size=args.code_size,
                     smoothness=args.smoothness)
    data, info = fit_linear_decoder(
        image, depth, spec, args.proximity_a,
        mode="data", objective=args.objective,
        valid=(raw > 0), source_id=args.source_id,
    )
    write_decoder(data, args.out)
    print("from-depth: %s, fit rms %.2e over %d px"
          % (args.out, info.rms, int((raw > 0).sum())))
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="decoder-gen",
        description="Render synthetic fixtures and fit linear depth decoders.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pf = sub.add_parser("fixture", help="emit a synthetic dataset")
    pf.add_argument("--out", required=True)
    pf.add_argument("--frames", type=int, default=2)
    pf.add_argument("--motion", default="lateral",
                    choices=["lateral", "forward", "rotation-only"])
    pf.add_argument("--step", type=float, default=0.1,
                    help="metres per frame, radians for rotation-only")
    pf.add_argument("--basis", default="dct2d",
                    choices=["dct2d", "gaussian_rbf", "pca"])
    pf.add_argument("--code-size", type=int, default=128)
    pf.add_argument("--smoothness", type=float, default=1.0)
    pf.add_argument("--seed", type=int, default=7)
    pf.add_argument("--width", type=int, default=256)
    pf.add_argument("--height", type=int, default=192)
    pf.add_argument("--f-scale", type=float, default=0.625)
    pf.add_argument("--noise-sigma", type=float, default=0.0)
    pf.set_defaults(func=cmd_fixture)

    pd = sub.add_parser("from-depth", help="fit a decoder to an RGB-D pair")
    pd.add_argument("--image", required=True)
    pd.add_argument("--depth", required=True, help="16-bit depth PNG")
    pd.add_argument("--out", required=True, help="output .csdm path")
    pd.add_argument("--basis", default="dct2d",
                    choices=["dct2d", "gaussian_rbf"])
    pd.add_argument("--code-size", type=int, default=128)
    pd.add_argument("--smoothness", type=float, default=1.0)
    pd.add_argument("--objective", default="l2", choices=["l2", "laplace"])
    pd.add_argument("--depth-scale", type=float, default=0.001,
                    help="metres per stored depth unit")
    pd.add_argument("--proximity-a", type=float, default=2.0)
    pd.add_argument("--source-id", default="")
    pd.set_defaults(func=cmd_from_depth)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (OSError, IOError, ValueError, BasisTooLarge) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
