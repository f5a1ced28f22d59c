"""Virtual normalized camera: rotation, labels, mesh placement, image warping.

Normalization re-expresses every sample in a canonical space: a virtual
camera with fixed focal length looking straight at the face center from a
fixed distance, with head roll removed.  Synthetic meshes are rigidly moved
into that space before rendering (rotation-only normalization; scale is
absorbed by translating the face to exactly the nominal distance), while
real images are warped with the induced homography.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNormalizationError
from .facemodel import Pose
from .geometry import Angles, CameraIntrinsics, vector_to_pitch_yaw
from .matching import CameraMesh
from .novelview import view_transform
from .render import warp_homography

FACE_FORWARD = np.array([0.0, 0.0, -1.0])


def default_normalized_intrinsics(focal: float = 960.0, size: int = 448) -> CameraIntrinsics:
    return CameraIntrinsics(fx=focal, fy=focal, cx=size / 2.0, cy=size / 2.0, width=size, height=size)


@dataclass(frozen=True)
class NormalizedCamera:
    """Virtual rendering camera plus the nominal camera-to-face distance."""

    intrinsics: CameraIntrinsics = None
    face_distance_mm: float = 300.0

    def __post_init__(self):
        if self.intrinsics is None:
            object.__setattr__(self, "intrinsics", default_normalized_intrinsics())
        if self.intrinsics.width != self.intrinsics.height:
            raise ValueError("normalized camera image must be square")
        if self.face_distance_mm <= 0:
            raise ValueError("face_distance_mm must be positive")


@dataclass(frozen=True)
class NormalizationResult:
    M: np.ndarray
    gaze: Angles
    head: Angles
    face_center_norm: np.ndarray


def normalization_rotation(face_center, head_R: np.ndarray) -> np.ndarray:
    """Rotation M turning the camera toward the face center with roll removed.

    Rows of M are the normalized-camera axes expressed in the real camera:
    z along the face center ray, y orthogonal to the head x-axis (removing
    roll), x completing the right-handed frame.
    """
    c = np.asarray(face_center, dtype=np.float64).reshape(3)
    n = np.linalg.norm(c)
    if n == 0:
        raise DegenerateNormalizationError("face center at the camera origin")
    z_n = c / n
    h_x = np.asarray(head_R, dtype=np.float64)[:, 0]
    y_n = np.cross(z_n, h_x)
    ny = np.linalg.norm(y_n)
    if ny < 1e-9:
        raise DegenerateNormalizationError("head x-axis parallel to the view ray")
    y_n = y_n / ny
    x_n = np.cross(y_n, z_n)
    return np.vstack([x_n, y_n, z_n])


def normalize_labels(gaze_target, face_center, head_R: np.ndarray, M: np.ndarray) -> tuple[Angles, Angles]:
    """Gaze and head pitch/yaw in the normalized camera.

    Gaze is the direction from the face center to the gaze target; head is
    the face-forward axis of the head rotation.  Both are rotated by M
    before conversion to angles.
    """
    g = np.asarray(gaze_target, dtype=np.float64) - np.asarray(face_center, dtype=np.float64)
    gaze = vector_to_pitch_yaw(M @ g)
    head = vector_to_pitch_yaw(M @ (np.asarray(head_R) @ FACE_FORWARD))
    return gaze, head


def place_for_rendering(
    mesh: CameraMesh,
    face_center,
    M: np.ndarray,
    cam: NormalizedCamera,
) -> CameraMesh:
    """Move the mesh into the normalized camera with the face center pinned.

    Applies the rigid view transform R_e = M, t_e chosen so the face center
    lands exactly at (0, 0, face_distance_mm); being a translation plus the
    same rotation applied to gaze target and vertices, it leaves the gaze
    direction angles produced by normalize_labels unchanged.
    """
    c = np.asarray(face_center, dtype=np.float64).reshape(3)
    t_e = np.array([0.0, 0.0, cam.face_distance_mm]) - M @ c
    return view_transform(mesh, Pose(M, t_e))


def normalize_sample(
    gaze_target,
    face_center,
    head_R: np.ndarray,
    cam: NormalizedCamera,
) -> NormalizationResult:
    """Rotation plus labels for one sample, with the placed face center."""
    M = normalization_rotation(face_center, head_R)
    gaze, head = normalize_labels(gaze_target, face_center, head_R, M)
    return NormalizationResult(
        M=M,
        gaze=gaze,
        head=head,
        face_center_norm=np.array([0.0, 0.0, cam.face_distance_mm]),
    )


def warp_to_normalized(
    image: np.ndarray,
    C_r: CameraIntrinsics,
    M: np.ndarray,
    cam: NormalizedCamera,
) -> np.ndarray:
    """Warp a real image into the normalized camera: H = C_n M C_r^-1.

    Bilinear sampling, out-of-bounds pixels black, output square at the
    normalized camera size.
    """
    if image.shape[0] != C_r.height or image.shape[1] != C_r.width:
        raise ValueError(
            f"image {image.shape[:2]} does not match intrinsics {C_r.height}x{C_r.width}"
        )
    H = cam.intrinsics.matrix() @ np.asarray(M, dtype=np.float64) @ C_r.inverse_matrix()
    return warp_homography(image, H, (cam.intrinsics.width, cam.intrinsics.height))
