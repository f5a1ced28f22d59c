"""Camera models, crop/resize transform, back-projection and angle conventions.

Conventions used throughout the package:

* Right-handed camera frame: +x image-right, +y image-down, +z along the
  optical axis into the scene.  Units are millimeters in 3D, pixels in 2D.
* Matrices are numpy (3, 3) arrays acting on column vectors, vectors are
  numpy (3,) arrays; batches stack along the first axis.
* Homogeneous results are normalized by the last coordinate.
* pitch = arcsin(-y), yaw = atan2(-x, -z) of the unit direction, so a
  direction straight into the camera, (0, 0, -1), has pitch = yaw = 0 and a
  horizontal mirror negates yaw exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateRayError,
    InvalidCropError,
    InvalidDirectionError,
    InvalidIntrinsicsError,
)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidIntrinsicsError(f"non-positive focal length ({self.fx}, {self.fy})")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidIntrinsicsError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height}"
            )

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )

    def inverse_matrix(self) -> np.ndarray:
        # closed form; the matrix is upper triangular with positive diagonal
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class CropSpec:
    """Face bounding box (center, size) and resize factors to patch size."""

    center_x: float
    center_y: float
    box_w: float
    box_h: float
    scale_x: float
    scale_y: float

    def __post_init__(self):
        if not (self.box_w > 0 and self.box_h > 0):
            raise InvalidCropError(f"non-positive box ({self.box_w}, {self.box_h})")
        if not (self.scale_x > 0 and self.scale_y > 0):
            raise InvalidCropError(f"non-positive scale ({self.scale_x}, {self.scale_y})")

    def patch_size(self) -> tuple[int, int]:
        """Patch (width, height); must land within 0.5 px of an integer."""
        w = self.scale_x * self.box_w
        h = self.scale_y * self.box_h
        return int(round(w)), int(round(h))


@dataclass(frozen=True)
class Angles:
    """Direction as (pitch, yaw) in radians."""

    pitch: float
    yaw: float

    def degrees(self) -> tuple[float, float]:
        return math.degrees(self.pitch), math.degrees(self.yaw)

    @staticmethod
    def from_degrees(pitch_deg: float, yaw_deg: float) -> "Angles":
        return Angles(math.radians(pitch_deg), math.radians(yaw_deg))

    def norm_deg(self) -> float:
        """L2 norm of the (pitch, yaw) vector in degrees."""
        p, y = self.degrees()
        return math.hypot(p, y)


def crop_matrix(crop: CropSpec, image_w: float | None = None, image_h: float | None = None) -> np.ndarray:
    """3x3 transform taking source-image homogeneous pixels to patch pixels.

    p_patch = T @ p_source with T = [[sx, 0, -sx (cx - bw/2)],
                                     [0, sy, -sy (cy - bh/2)],
                                     [0,  0,  1]].
    The image size arguments are accepted for interface symmetry and are not
    used by the mapping itself.
    """
    sx, sy = crop.scale_x, crop.scale_y
    return np.array(
        [
            [sx, 0.0, -sx * (crop.center_x - crop.box_w / 2.0)],
            [0.0, sy, -sy * (crop.center_y - crop.box_h / 2.0)],
            [0.0, 0.0, 1.0],
        ],
        dtype=np.float64,
    )


def _as_homogeneous_pixels(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    squeeze = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] == 2:
        p = np.hstack([p, np.ones((p.shape[0], 1))])
    elif p.shape[1] != 3:
        raise ValueError(f"expected (u,v) or (u,v,w) pixels, got shape {p.shape}")
    return p, squeeze


def backproject_unit_ray(p_patch, C: CameraIntrinsics, T: np.ndarray | None = None) -> np.ndarray:
    """Unit direction of the ray through a patch pixel: C^-1 T^-1 p normalized.

    Accepts a single (u, v[, w]) point or an (N, 2|3) batch.  Raises
    DegenerateRayError if the normalized ray does not have z > 0.
    """
    p, squeeze = _as_homogeneous_pixels(p_patch)
    if T is None:
        p_src = p
    else:
        T = np.asarray(T, dtype=np.float64)
        if abs(np.linalg.det(T)) < 1e-15:
            raise InvalidCropError("crop matrix is not invertible")
        p_src = p @ np.linalg.inv(T).T
    rays = p_src @ C.inverse_matrix().T
    norms = np.linalg.norm(rays, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DegenerateRayError("zero-length back-projection")
    rays = rays / norms
    if np.any(rays[:, 2] <= 0):
        bad = np.nonzero(rays[:, 2] <= 0)[0]
        raise DegenerateRayError(f"ray(s) {bad.tolist()} point behind the camera")
    return rays[0] if squeeze else rays


def project_point(C: CameraIntrinsics, v) -> np.ndarray:
    """Perspective projection (fx x/z + cx, fy y/z + cy) of camera-space points.

    Accepts a single (3,) point or an (N, 3) batch; requires z > 0.
    """
    v = np.asarray(v, dtype=np.float64)
    squeeze = v.ndim == 1
    pts = np.atleast_2d(v)
    z = pts[:, 2]
    if np.any(z <= 0):
        bad = np.nonzero(z <= 0)[0]
        raise BehindCameraError(f"point(s) {bad.tolist()} have z <= 0")
    uv = np.empty((pts.shape[0], 2))
    uv[:, 0] = C.fx * pts[:, 0] / z + C.cx
    uv[:, 1] = C.fy * pts[:, 1] / z + C.cy
    return uv[0] if squeeze else uv


def vector_to_pitch_yaw(v) -> Angles:
    """Angles of a direction: pitch = arcsin(-y), yaw = atan2(-x, -z)."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0 or not np.isfinite(n):
        raise InvalidDirectionError("zero or non-finite direction")
    x, y, z = v / n
    return Angles(math.asin(max(-1.0, min(1.0, -y))), math.atan2(-x, -z))


def pitch_yaw_to_vector(a: Angles) -> np.ndarray:
    """Unit direction for (pitch, yaw); inverse of vector_to_pitch_yaw."""
    cp = math.cos(a.pitch)
    return np.array(
        [-cp * math.sin(a.yaw), -math.sin(a.pitch), -cp * math.cos(a.yaw)],
        dtype=np.float64,
    )


def angular_error_deg(v1, v2) -> float:
    """Angle between two directions in degrees, in [0, 180].

    Computed as atan2(||v1 x v2||, v1 . v2), which equals the arccos of the
    clamped normalized dot product but stays well-conditioned near 0 and 180.
    """
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
    if n1 == 0 or n2 == 0:
        raise InvalidDirectionError("zero-length direction")
    return math.degrees(math.atan2(np.linalg.norm(np.cross(v1, v2)), float(np.dot(v1, v2))))


# -- rotation helpers ------------------------------------------------------

def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        return False
    return (
        np.max(np.abs(R.T @ R - np.eye(3))) < tol
        and abs(np.linalg.det(R) - 1.0) < tol
    )


def require_rotation(R: np.ndarray, tol: float = 1e-9, what: str = "matrix") -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if not is_rotation(R, tol):
        raise ValueError(f"{what} is not a rotation (tol {tol})")
    return R


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def head_rotation(a: Angles) -> np.ndarray:
    """Roll-free head rotation whose forward axis -z maps to the given angles.

    Built as yaw about the camera y-axis composed with pitch about the head's
    own x-axis (R = Ry(yaw) @ Rx(-pitch)), which makes the round trip
    vector_to_pitch_yaw(R @ (0,0,-1)) == a exact and keeps the head x-axis in
    the camera's horizontal plane.
    """
    return rot_y(a.yaw) @ rot_x(-a.pitch)


def rodrigues(w) -> np.ndarray:
    """Rotation matrix for an axis-angle vector (exponential map)."""
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        K = skew(w)
        return np.eye(3) + K + 0.5 * (K @ K)
    k = w / theta
    K = skew(k)
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


def rotation_to_axis_angle(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (logarithm map)."""
    R = np.asarray(R, dtype=np.float64)
    cos_theta = max(-1.0, min(1.0, (np.trace(R) - 1.0) / 2.0))
    theta = math.acos(cos_theta)
    if theta < 1e-12:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if abs(math.pi - theta) < 1e-6:
        # near pi the off-diagonal formula degenerates; use the symmetric part
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(A), 0.0))
        # fix signs from the largest component
        i = int(np.argmax(axis))
        if axis[i] > 0:
            axis = axis.copy()
            axis[(i + 1) % 3] = A[i, (i + 1) % 3] / axis[i]
            axis[(i + 2) % 3] = A[i, (i + 2) % 3] / axis[i]
        axis = axis / (np.linalg.norm(axis) or 1.0)
        return axis * theta
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return axis / (2.0 * math.sin(theta)) * theta


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=np.float64)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_angle_deg(R1: np.ndarray, R2: np.ndarray) -> float:
    """Geodesic angle between two rotations in degrees."""
    R = np.asarray(R1) @ np.asarray(R2).T
    cos_theta = max(-1.0, min(1.0, (np.trace(R) - 1.0) / 2.0))
    return math.degrees(math.acos(cos_theta))
