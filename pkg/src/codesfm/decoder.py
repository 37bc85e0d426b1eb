"""Per-keyframe linear depth decoder artifacts.

A decoder maps a small latent code to a 4-level proximity pyramid through a
precomputed affine map: prox = clamp(mean_zero + jacobian @ code). The map,
its Jacobian, and a per-pixel uncertainty are baked offline per image; this
module only evaluates and (de)serializes them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CodeSizeMismatch, FormatError, LevelOutOfRange
from .geometry import ProximityParams, proximity_to_depth

MAGIC = b"CSDM"
VERSION = 1
N_LEVELS = 4
PROX_EPS = 1e-4  # lower clamp of decoded proximity


@dataclass(frozen=True)
class DecoderLevel:
    width: int
    height: int
    mean_zero: np.ndarray  # (H, W) proximity at zero code, in (0, 1]
    jacobian: np.ndarray  # (H * W, code_size), proximity per code unit
    uncertainty: np.ndarray  # (H, W) positive Laplace scale b

    def __post_init__(self):
        if self.mean_zero.shape != (self.height, self.width):
            raise FormatError("mean_zero shape mismatch")
        if self.uncertainty.shape != (self.height, self.width):
            raise FormatError("uncertainty shape mismatch")
        if self.jacobian.shape[0] != self.height * self.width:
            raise FormatError("jacobian row count mismatch")
        if np.any(self.mean_zero <= 0) or np.any(self.mean_zero > 1):
            raise FormatError("mean_zero must lie in (0, 1]")
        if np.any(self.uncertainty <= 0):
            raise FormatError("uncertainty must be positive")
        if not np.all(np.isfinite(self.jacobian)):
            raise FormatError("jacobian must be finite")


@dataclass(frozen=True)
class DecoderModel:
    code_size: int
    levels: list  # 4 DecoderLevel, finest first
    source_id: str = ""

    def __post_init__(self):
        if self.code_size <= 0:
            raise FormatError("code_size must be positive")
        if len(self.levels) != N_LEVELS:
            raise FormatError("decoder must have exactly %d levels" % N_LEVELS)
        for i, lvl in enumerate(self.levels):
            if lvl.jacobian.shape[1] != self.code_size:
                raise FormatError("level %d code_size mismatch" % i)
            if i > 0:
                prev = self.levels[i - 1]
                if lvl.width != prev.width // 2 or lvl.height != prev.height // 2:
                    raise FormatError("levels must halve in resolution")


def zero_code(code_size):
    return np.zeros(code_size, dtype=np.float64)


def _check_level(m: DecoderModel, level):
    if not 0 <= level < N_LEVELS:
        raise LevelOutOfRange("level %r outside [0, %d]" % (level, N_LEVELS - 1))
    return m.levels[level]


def _check_code(m: DecoderModel, c):
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    if c.shape[0] != m.code_size:
        raise CodeSizeMismatch(
            "code has %d entries, decoder expects %d" % (c.shape[0], m.code_size)
        )
    return c


def decode_proximity(m: DecoderModel, c, level):
    """Proximity map clamp(mean_zero + jacobian @ c, PROX_EPS, 1) at `level`."""
    lvl = _check_level(m, level)
    c = _check_code(m, c)
    p = lvl.mean_zero + (lvl.jacobian @ c).reshape(lvl.height, lvl.width)
    return np.clip(p, PROX_EPS, 1.0)


def decode_active_mask(m: DecoderModel, c, level):
    """Pixels where the clamp is inactive (code gradient passes through)."""
    lvl = _check_level(m, level)
    c = _check_code(m, c)
    p = lvl.mean_zero + (lvl.jacobian @ c).reshape(lvl.height, lvl.width)
    return (p > PROX_EPS) & (p < 1.0)


def decode_depth(m: DecoderModel, c, level, params: ProximityParams):
    """Depth map in metres at `level`; finite because proximity is clamped."""
    return proximity_to_depth(decode_proximity(m, c, level), params)


def code_jacobian(m: DecoderModel, level):
    """The stored (H*W, code_size) proximity-space Jacobian at `level`.

    Constant in the code. Conversion to depth space multiplies rows by
    dd/dp = -a/p^2; rows where the clamp is active must be zeroed by the
    caller (see decode_active_mask).
    """
    return _check_level(m, level).jacobian


def save_decoder(m: DecoderModel, path):
    """Write the little-endian binary artifact; lossless for float32 data."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, m.code_size, len(m.levels)))
        for lvl in m.levels:
            f.write(struct.pack("<II", lvl.width, lvl.height))
            f.write(np.ascontiguousarray(lvl.mean_zero, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(lvl.uncertainty, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(lvl.jacobian, dtype="<f4").tobytes())
        sid = m.source_id.encode("utf-8")
        f.write(struct.pack("<I", len(sid)))
        f.write(sid)


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError("truncated decoder file while reading %s" % what)
    return buf


def load_decoder(path) -> DecoderModel:
    """Read a decoder artifact; raises FormatError on any inconsistency."""
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != MAGIC:
            raise FormatError("bad magic, not a decoder artifact")
        version, code_size, n_levels = struct.unpack(
            "<III", _read_exact(f, 12, "header")
        )
        if version != VERSION:
            raise FormatError("unsupported decoder version %d" % version)
        if code_size == 0:
            raise FormatError("code_size must be positive")
        if n_levels != N_LEVELS:
            raise FormatError("expected %d levels, found %d" % (N_LEVELS, n_levels))
        levels = []
        for i in range(n_levels):
            w, h = struct.unpack("<II", _read_exact(f, 8, "level %d dims" % i))
            if w == 0 or h == 0:
                raise FormatError("level %d has empty dimensions" % i)
            n = w * h
            mean = np.frombuffer(
                _read_exact(f, 4 * n, "level %d mean" % i), dtype="<f4"
            ).astype(np.float64).reshape(h, w)
            unc = np.frombuffer(
                _read_exact(f, 4 * n, "level %d uncertainty" % i), dtype="<f4"
            ).astype(np.float64).reshape(h, w)
            jac = np.frombuffer(
                _read_exact(f, 4 * n * code_size, "level %d jacobian" % i), dtype="<f4"
            ).astype(np.float64).reshape(n, code_size)
            levels.append(
                DecoderLevel(width=w, height=h, mean_zero=mean, uncertainty=unc, jacobian=jac)
            )
        (sid_len,) = struct.unpack("<I", _read_exact(f, 4, "footer"))
        source_id = _read_exact(f, sid_len, "source_id").decode("utf-8")
        if f.read(1) != b"":
            raise FormatError("trailing bytes after decoder footer")
    return DecoderModel(code_size=code_size, levels=levels, source_id=source_id)
