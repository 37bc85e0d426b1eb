"""Synthetic scene rendering and linear depth-decoder generation."""

from .artifact import DecoderData, LevelData, write_decoder
from .basis import BasisSpec, BasisTooLarge, build_basis, pca_basis
from .fit import FitInfo, depth_to_proximity, fit_linear_decoder
from .fixtures import FixtureSpec, build_scene, emit_fixture
from .render import render_scene
from .scene import (Box, Calib, Plane, Sphere, SyntheticScene, BandTexture,
                    make_trajectory, pose_rt, standard_calib)

__all__ = [
    "BandTexture", "BasisSpec", "BasisTooLarge", "Box", "Calib",
    "DecoderData", "FitInfo", "FixtureSpec", "LevelData", "Plane", "Sphere",
    "SyntheticScene", "build_basis", "build_scene", "depth_to_proximity",
    "emit_fixture", "fit_linear_decoder", "make_trajectory", "pca_basis",
    "pose_rt", "render_scene", "standard_calib", "write_decoder",
]
