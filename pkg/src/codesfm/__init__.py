"""Dense monocular SfM and sliding-window SLAM on compact depth codes.

Each keyframe carries a small latent code; a precomputed linear decoder
expands it to a dense proximity map. Photometric and geometric residuals
couple frames, and poses and codes are optimized jointly.
"""

from . import errors
from .decoder import (
    DecoderLevel,
    DecoderModel,
    decode_depth,
    decode_proximity,
    load_decoder,
    save_decoder,
    zero_code,
)
from .geometry import (
    CameraIntrinsics,
    ProximityParams,
    Se3Pose,
    depth_to_proximity,
    proximity_to_depth,
    se3_exp,
    se3_log,
)
from .sfm import Keyframe, PairGraph, SfmOptions, SfmResult, build_full_pairs, build_master_pairs, run_sfm
from .slam import Frame, ProcessResult, SlamConfig, SlamMap, initialize, process_frame
from .solver import NormalEquations, OptimizationReport, SolverOptions, VariableLayout, marginalize, optimize
from .tracker import Convergence, TrackingOptions, TrackingState, track
from .warp import ImagePyramid, ResidualOptions, build_pyramid

__version__ = "0.1.0"

__all__ = [
    "errors",
    "DecoderLevel",
    "DecoderModel",
    "decode_depth",
    "decode_proximity",
    "load_decoder",
    "save_decoder",
    "zero_code",
    "CameraIntrinsics",
    "ProximityParams",
    "Se3Pose",
    "depth_to_proximity",
    "proximity_to_depth",
    "se3_exp",
    "se3_log",
    "Keyframe",
    "PairGraph",
    "SfmOptions",
    "SfmResult",
    "build_full_pairs",
    "build_master_pairs",
    "run_sfm",
    "Frame",
    "ProcessResult",
    "SlamConfig",
    "SlamMap",
    "initialize",
    "process_frame",
    "NormalEquations",
    "OptimizationReport",
    "SolverOptions",
    "VariableLayout",
    "marginalize",
    "optimize",
    "Convergence",
    "TrackingOptions",
    "TrackingState",
    "track",
    "ImagePyramid",
    "ResidualOptions",
    "build_pyramid",
]
