"""Camera model, SE(3) poses with manifold updates, and the proximity parametrization.

Conventions:
  - Pixel coordinates are (u, v) with u along image width; integer coordinates
    land exactly on pixel centers.
  - A pose T = (R, t) maps points from its own frame into the parent frame,
    x_parent = R @ x + t. Keyframe poses are world-from-frame.
  - Tangent vectors are 6-vectors [rho, theta] (translation first), applied as
    left-multiplicative updates T <- exp(delta) @ T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeDepth, NonPositiveDepth, ProximityOutOfRange

MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera without distortion."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def scaled(self, level):
        """Intrinsics for pyramid level `level` (0 = finest).

        Focal lengths and principal point halve per level; sizes floor-divide.
        """
        s = 0.5**level
        return CameraIntrinsics(
            fx=self.fx * s,
            fy=self.fy * s,
            cx=self.cx * s,
            cy=self.cy * s,
            width=self.width >> level,
            height=self.height >> level,
        )


@dataclass(frozen=True)
class ProximityParams:
    """Average-depth parameter `a` of the hybrid proximity mapping."""

    a: float = 2.0

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("average depth must be positive")


def depth_to_proximity(d, params: ProximityParams):
    """Map depth [0, inf) to proximity (0, 1]: p = a / (d + a)."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise NegativeDepth("depth must be non-negative")
    return params.a / (d + params.a)


def proximity_to_depth(p, params: ProximityParams):
    """Inverse of depth_to_proximity: d = a (1 - p) / p for p in (0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0) or np.any(p > 1):
        raise ProximityOutOfRange("proximity must lie in (0, 1]")
    return params.a * (1.0 - p) / p


def ddepth_dproximity(p, params: ProximityParams):
    """Derivative of proximity_to_depth: dd/dp = -a / p^2."""
    p = np.asarray(p, dtype=np.float64)
    return -params.a / (p * p)


def project(x, K: CameraIntrinsics):
    """Pinhole projection of camera-frame points (..., 3) to pixels (..., 2)."""
    x = np.asarray(x, dtype=np.float64)
    z = x[..., 2]
    if np.any(z <= MIN_DEPTH):
        raise NonPositiveDepth("point depth must exceed %g" % MIN_DEPTH)
    u = K.fx * x[..., 0] / z + K.cx
    v = K.fy * x[..., 1] / z + K.cy
    return np.stack([u, v], axis=-1)


def unproject(u, d, K: CameraIntrinsics):
    """Back-project pixels (..., 2) at depth d (...,) to camera-frame points."""
    u = np.asarray(u, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise NonPositiveDepth("depth must be positive")
    x = (u[..., 0] - K.cx) / K.fx
    y = (u[..., 1] - K.cy) / K.fy
    return d[..., None] * np.stack([x, y, np.ones_like(x)], axis=-1)


def unit_rays(u, K: CameraIntrinsics):
    """Unit-z viewing rays ((u-cx)/fx, (v-cy)/fy, 1) for pixels (..., 2)."""
    u = np.asarray(u, dtype=np.float64)
    x = (u[..., 0] - K.cx) / K.fx
    y = (u[..., 1] - K.cy) / K.fy
    return np.stack([x, y, np.ones_like(x)], axis=-1)


def projection_jacobian(x, K: CameraIntrinsics):
    """d(project)/dx for camera-frame points (..., 3); returns (..., 2, 3)."""
    x = np.asarray(x, dtype=np.float64)
    z = x[..., 2]
    iz = 1.0 / z
    iz2 = iz * iz
    J = np.zeros(x.shape[:-1] + (2, 3), dtype=np.float64)
    J[..., 0, 0] = K.fx * iz
    J[..., 0, 2] = -K.fx * x[..., 0] * iz2
    J[..., 1, 1] = K.fy * iz
    J[..., 1, 2] = -K.fy * x[..., 1] * iz2
    return J


def skew(v):
    """Skew-symmetric matrix so that skew(v) @ w = cross(v, w)."""
    v = np.asarray(v, dtype=np.float64)
    S = np.zeros(v.shape[:-1] + (3, 3), dtype=np.float64)
    S[..., 0, 1] = -v[..., 2]
    S[..., 0, 2] = v[..., 1]
    S[..., 1, 0] = v[..., 2]
    S[..., 1, 2] = -v[..., 0]
    S[..., 2, 0] = -v[..., 1]
    S[..., 2, 1] = v[..., 0]
    return S


def _so3_exp(theta):
    angle = float(np.linalg.norm(theta))
    S = skew(theta)
    if angle < 1e-8:
        # 2nd-order series; error O(angle^4) is below double rounding here
        return np.eye(3) + S + 0.5 * (S @ S)
    c1 = np.sin(angle) / angle
    c2 = (1.0 - np.cos(angle)) / angle**2
    return np.eye(3) + c1 * S + c2 * (S @ S)


def _so3_log(R):
    cos_angle = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    angle = np.arccos(cos_angle)
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-8:
        return w
    if angle > np.pi - 1e-6:
        # near pi the antisymmetric part degenerates; use the symmetric part
        A = (R + np.eye(3)) * 0.5
        axis = np.sqrt(np.maximum(np.diag(A), 0.0))
        k = int(np.argmax(axis))
        axis = A[:, k] / max(axis[k], 1e-12)
        axis /= np.linalg.norm(axis)
        if np.dot(axis, w) < 0:
            axis = -axis
        return angle * axis
    return angle / np.sin(angle) * w


def _so3_left_jacobian(theta):
    angle = float(np.linalg.norm(theta))
    S = skew(theta)
    if angle < 1e-8:
        return np.eye(3) + 0.5 * S + (S @ S) / 6.0
    c1 = (1.0 - np.cos(angle)) / angle**2
    c2 = (angle - np.sin(angle)) / angle**3
    return np.eye(3) + c1 * S + c2 * (S @ S)


def _so3_left_jacobian_inv(theta):
    angle = float(np.linalg.norm(theta))
    S = skew(theta)
    if angle < 1e-8:
        return np.eye(3) - 0.5 * S + (S @ S) / 12.0
    c = 1.0 / angle**2 - (1.0 + np.cos(angle)) / (2.0 * angle * np.sin(angle))
    return np.eye(3) - 0.5 * S + c * (S @ S)


class Se3Pose:
    """Rigid-body transform (R, t): x_parent = R @ x + t.

    Immutable value type; all update operations return new instances.
    """

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation, translation, check=True):
        R = np.array(rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(translation, dtype=np.float64).reshape(3)
        if check:
            if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-6:
                raise ValueError("rotation is not orthonormal")
            if abs(np.linalg.det(R) - 1.0) > 1e-6:
                raise ValueError("rotation determinant is not +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def __setattr__(self, name, value):
        raise AttributeError("Se3Pose is immutable")

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    @staticmethod
    def identity():
        return Se3Pose(np.eye(3), np.zeros(3), check=False)

    def compose(self, other: "Se3Pose") -> "Se3Pose":
        return Se3Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            check=False,
        )

    def inverse(self) -> "Se3Pose":
        Rt = self.rotation.T
        return Se3Pose(Rt, -Rt @ self.translation, check=False)

    def apply(self, x):
        """Transform points (..., 3) into the parent frame."""
        x = np.asarray(x, dtype=np.float64)
        return x @ self.rotation.T + self.translation

    def matrix(self):
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def __repr__(self):
        return "Se3Pose(t=%s)" % np.array2string(self.translation, precision=4)


def se3_exp(delta) -> Se3Pose:
    """Exponential map of [rho, theta] to a pose (R = exp(theta^), t = V rho)."""
    delta = np.asarray(delta, dtype=np.float64).reshape(6)
    rho, theta = delta[:3], delta[3:]
    R = _so3_exp(theta)
    V = _so3_left_jacobian(theta)
    return Se3Pose(R, V @ rho, check=False)


def se3_log(T: Se3Pose):
    """Inverse of se3_exp; returns the 6-vector [rho, theta]."""
    theta = _so3_log(T.rotation)
    rho = _so3_left_jacobian_inv(theta) @ T.translation
    return np.concatenate([rho, theta])


def se3_retract(T: Se3Pose, delta) -> Se3Pose:
    """Left-multiplicative manifold update: exp(delta) composed with T."""
    delta = np.asarray(delta, dtype=np.float64).reshape(6)
    if not delta.any():
        return T
    Tn = se3_exp(delta).compose(T)
    # re-project the rotation so long update chains stay orthonormal
    U, _, Vt = np.linalg.svd(Tn.rotation)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return Se3Pose(R, Tn.translation, check=False)


def se3_local_coords(T: Se3Pose, T_ref: Se3Pose):
    """Tangent coordinates of T relative to T_ref: log(T @ T_ref^-1).

    Inverse of se3_retract in the sense retract(T_ref, local_coords(T, T_ref)) = T.
    """
    return se3_log(T.compose(T_ref.inverse()))
