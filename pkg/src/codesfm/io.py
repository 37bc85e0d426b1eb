"""Dataset ingestion and simple exporters.

File conventions: greyscale 8/16-bit PNG images (colour folded to
luminance), 16-bit depth PNGs in millimetres with 0 marking invalid
pixels, calib.json with pinhole intrinsics plus the dataset's average
depth, and manifest.json tying a frame sequence together. Decoder
artifacts use their own binary format (see the decoder module).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import cv2
import numpy as np

from .decoder import load_decoder
from .errors import FormatError, IoError, UnsupportedFormat
from .geometry import CameraIntrinsics, ProximityParams
from .warp import ImagePyramid, build_pyramid

MIN_IMAGE_SIZE = 32  # 4 pyramid levels need at least 32x32 input

LUMA = np.array([0.114, 0.587, 0.299])  # BGR order as cv2 loads it


def load_image(path):
    """Greyscale float32 image in [0, 1]."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IoError("cannot read image %r" % (path,))
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]
        img = raw.astype(np.float64) @ LUMA
    else:
        img = raw.astype(np.float64)
    if raw.dtype == np.uint8:
        img /= 255.0
    elif raw.dtype == np.uint16:
        img /= 65535.0
    else:
        raise UnsupportedFormat("unsupported image dtype %s" % raw.dtype)
    return img.astype(np.float32)


def load_image_pyramid(path) -> ImagePyramid:
    img = load_image(path)
    h, w = img.shape
    if h < MIN_IMAGE_SIZE or w < MIN_IMAGE_SIZE:
        raise UnsupportedFormat(
            "image %dx%d smaller than minimum %d" % (w, h, MIN_IMAGE_SIZE)
        )
    return build_pyramid(img)


def load_depth_gt(path, params: ProximityParams):
    """16-bit millimetre depth PNG to (proximity map, valid mask)."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IoError("cannot read depth %r" % (path,))
    if raw.ndim != 2 or raw.dtype != np.uint16:
        raise UnsupportedFormat("depth must be single-channel 16-bit PNG")
    mask = raw > 0
    d = raw.astype(np.float64) / 1000.0
    prox = np.where(mask, params.a / (d + params.a), 0.0)
    return prox, mask


def write_depth_png16(path, depth_m):
    """Depth in metres to a 16-bit millimetre PNG; <=0/nonfinite -> 0."""
    d = np.asarray(depth_m, dtype=np.float64)
    mm = np.where(np.isfinite(d) & (d > 0), np.rint(d * 1000.0), 0.0)
    mm = np.clip(mm, 0, 65535).astype(np.uint16)
    if not cv2.imwrite(str(path), mm):
        raise IoError("cannot write %r" % (path,))


def proximity_cloud(prox, valid, intrinsics, pose, params: ProximityParams):
    """World-frame (N, 3) points for the valid pixels of a proximity map."""
    prox = np.asarray(prox, dtype=np.float64)
    h, w = prox.shape
    ys, xs = np.mgrid[0:h, 0:w]
    rays = np.stack(
        [
            (xs.reshape(-1) - intrinsics.cx) / intrinsics.fx,
            (ys.reshape(-1) - intrinsics.cy) / intrinsics.fy,
            np.ones(h * w),
        ],
        axis=-1,
    )
    p = prox.reshape(-1)
    d = params.a * (1.0 - p) / p
    pts = pose.apply(d[:, None] * rays)
    return pts[np.asarray(valid, bool).reshape(-1)]


def write_ply(path, points):
    """Binary little-endian PLY point cloud, float32 x y z."""
    pts = np.ascontiguousarray(np.asarray(points, dtype="<f4").reshape(-1, 3))
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        "element vertex %d\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n" % pts.shape[0]
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(pts.tobytes())


def read_ply(path):
    with open(path, "rb") as f:
        data = f.read()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii")
    n = int([l for l in header.splitlines() if l.startswith("element vertex")][0].split()[-1])
    return np.frombuffer(data[end : end + 12 * n], dtype="<f4").reshape(n, 3).astype(np.float64)


def load_calibration(path):
    """calib.json -> (CameraIntrinsics, ProximityParams).

    Keys fx, fy, cx, cy, width, height; optional avg_depth sets the
    proximity scale a (defaults to 2.0 m)."""
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise FormatError("calibration is not valid JSON: %s" % exc) from exc
    try:
        intr = CameraIntrinsics(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )
    except KeyError as exc:
        raise FormatError("calibration missing key %s" % exc) from exc
    params = ProximityParams(a=float(data.get("avg_depth", 2.0)))
    return intr, params


@dataclass(frozen=True)
class FrameEntry:
    image: str
    timestamp: float
    depth: str = None
    decoder: str = None


@dataclass(frozen=True)
class SequenceManifest:
    root: str
    calibration: str
    frames: tuple


def load_manifest(path) -> SequenceManifest:
    """manifest.json: {"calibration": ..., "frames": [{"image", "timestamp",
    "depth"?, "decoder"?}, ...]}, paths relative to the manifest. Every
    referenced file must exist and timestamps must strictly increase."""
    root = os.path.dirname(os.path.abspath(path))
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise FormatError("manifest is not valid JSON: %s" % exc) from exc

    def resolve(rel, what):
        if rel is None:
            return None
        p = os.path.join(root, rel)
        if not os.path.exists(p):
            raise IoError("%s %r in manifest does not exist" % (what, rel))
        return p

    if "calibration" not in data or "frames" not in data:
        raise FormatError("manifest needs 'calibration' and 'frames'")
    calib = resolve(data["calibration"], "calibration")
    frames = []
    last_ts = None
    for i, fr in enumerate(data["frames"]):
        if "image" not in fr or "timestamp" not in fr:
            raise FormatError("frame %d needs 'image' and 'timestamp'" % i)
        ts = float(fr["timestamp"])
        if last_ts is not None and ts <= last_ts:
            raise FormatError("timestamps must strictly increase (frame %d)" % i)
        last_ts = ts
        frames.append(
            FrameEntry(
                image=resolve(fr["image"], "image"),
                timestamp=ts,
                depth=resolve(fr.get("depth"), "depth"),
                decoder=resolve(fr.get("decoder"), "decoder"),
            )
        )
    return SequenceManifest(root=root, calibration=calib, frames=tuple(frames))


def load_manifest_frames(manifest: SequenceManifest):
    """Load everything a manifest references.

    Returns (intrinsics, params, frames) where each frame is a dict with
    id (image stem), pyramid, timestamp, decoder (or None), and, when
    ground-truth depth is present, gt_proximity and gt_mask."""
    intr, params = load_calibration(manifest.calibration)
    frames = []
    for entry in manifest.frames:
        fr = {
            "id": os.path.splitext(os.path.basename(entry.image))[0],
            "pyramid": load_image_pyramid(entry.image),
            "timestamp": entry.timestamp,
            "decoder": load_decoder(entry.decoder) if entry.decoder else None,
        }
        if entry.depth:
            fr["gt_proximity"], fr["gt_mask"] = load_depth_gt(entry.depth, params)
        frames.append(fr)
    return intr, params, frames


def load_sequence_dir(seq_dir):
    """Ordered (png path, timestamp) pairs from a directory holding
    images plus timestamps.txt (one float per line, image-sorted order)."""
    pngs = sorted(
        os.path.join(seq_dir, f) for f in os.listdir(seq_dir) if f.endswith(".png")
    )
    if not pngs:
        raise IoError("no PNG images in %r" % (seq_dir,))
    ts_path = os.path.join(seq_dir, "timestamps.txt")
    if not os.path.exists(ts_path):
        raise IoError("missing timestamps.txt in %r" % (seq_dir,))
    with open(ts_path) as f:
        stamps = [float(line) for line in f if line.strip()]
    if len(stamps) != len(pngs):
        raise FormatError(
            "%d timestamps for %d images" % (len(stamps), len(pngs))
        )
    return list(zip(pngs, stamps))


def find_decoder(decoders_dir, frame_id):
    p = os.path.join(decoders_dir, "%s.csdm" % frame_id)
    if not os.path.exists(p):
        raise IoError("no decoder artifact for frame %r in %r" % (frame_id, decoders_dir))
    return load_decoder(p)


def write_codes_bin(path, codes_in_order):
    """Flat little-endian dump: u32 count, u32 code_size, then count
    rows of float32 codes in the order poses.json lists frames."""
    codes = [np.asarray(c, dtype="<f4") for c in codes_in_order]
    size = codes[0].shape[0] if codes else 0
    with open(path, "wb") as f:
        f.write(struct.pack("<II", len(codes), size))
        for c in codes:
            f.write(c.tobytes())


def read_codes_bin(path):
    with open(path, "rb") as f:
        count, size = struct.unpack("<II", f.read(8))
        out = np.frombuffer(f.read(4 * count * size), dtype="<f4")
    return out.astype(np.float64).reshape(count, size)
