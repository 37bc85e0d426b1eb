"""Decoder artifact writer.

Implements the CSDM v1 container from its format description (see
FORMAT.md at the repository root) rather than borrowing the consumer's
code, so emitted bytes genuinely cross an interface boundary: header
CSDM | u32 version | u32 code_size | u32 n_levels, then per level
u32 width | u32 height followed by float32 mean, uncertainty and
row-major (pixels x code_size) jacobian, then u32 length + UTF-8
source id. All integers and floats little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"CSDM"
VERSION = 1
N_LEVELS = 4


@dataclass
class LevelData:
    width: int
    height: int
    mean_zero: np.ndarray  # (height, width), in (0, 1]
    uncertainty: np.ndarray  # (height, width), > 0
    jacobian: np.ndarray  # (height*width, code_size)


@dataclass
class DecoderData:
    code_size: int
    levels: list
    source_id: str = ""

    def validate(self):
        if self.code_size <= 0:
            raise ValueError("code_size must be positive")
        if len(self.levels) != N_LEVELS:
            raise ValueError("artifact needs exactly %d levels" % N_LEVELS)
        for i, lvl in enumerate(self.levels):
            if i and (lvl.width != self.levels[i - 1].width // 2
                      or lvl.height != self.levels[i - 1].height // 2):
                raise ValueError("level %d does not halve the previous" % i)
            if lvl.mean_zero.shape != (lvl.height, lvl.width):
                raise ValueError("level %d mean shape mismatch" % i)
            if lvl.uncertainty.shape != (lvl.height, lvl.width):
                raise ValueError("level %d uncertainty shape mismatch" % i)
            if lvl.jacobian.shape != (lvl.height * lvl.width, self.code_size):
                raise ValueError("level %d jacobian shape mismatch" % i)
            if not (np.all(lvl.mean_zero > 0) and np.all(lvl.mean_zero <= 1)):
                raise ValueError("level %d mean outside (0, 1]" % i)
            if not np.all(lvl.uncertainty > 0):
                raise ValueError("level %d uncertainty not positive" % i)
            if not np.all(np.isfinite(lvl.jacobian)):
                raise ValueError("level %d jacobian not finite" % i)


def box_down(img):
    """2x2 box average, the same reduction the consumer's pyramid uses."""
    h, w = img.shape
    return img[: h - h % 2, : w - w % 2].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def pyramid_levels(mean, uncertainty, jacobian, code_size):
    """Four LevelData entries from full-resolution fields.

    The jacobian is downsampled column by column, so decode-then-reduce
    equals reduce-then-decode exactly.
    """
    h, w = mean.shape
    levels = []
    m, u, j = mean, uncertainty, jacobian
    for _ in range(N_LEVELS):
        h, w = m.shape
        levels.append(
            LevelData(width=w, height=h,
                      mean_zero=m.astype(np.float32),
                      uncertainty=u.astype(np.float32),
                      jacobian=j.astype(np.float32))
        )
        m = box_down(m)
        u = box_down(u)
        j = np.stack(
            [box_down(j[:, k].reshape(h, w)).reshape(-1) for k in range(code_size)],
            axis=1,
        )
    return levels


def write_decoder(data: DecoderData, path):
    data.validate()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, data.code_size, len(data.levels)))
        for lvl in data.levels:
            f.write(struct.pack("<II", lvl.width, lvl.height))
            f.write(np.ascontiguousarray(lvl.mean_zero, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(lvl.uncertainty, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(lvl.jacobian, dtype="<f4").tobytes())
        sid = data.source_id.encode("utf-8")
        f.write(struct.pack("<I", len(sid)))
        f.write(sid)
