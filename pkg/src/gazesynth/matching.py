"""Projective matching: lift patch-space meshes onto metric camera-space rays.

A reconstructed mesh lives in patch pixels (u, v, d).  Each vertex must sit
on the back-projected ray of its (u, v) pixel; the range along that ray is
modeled as lambda = alpha * d + beta, where alpha converts the patch pixel
unit to millimeters and beta anchors the face at the camera-space depth of
the PnP-fitted reference model.  Changing alpha/beta slides vertices along
their rays only, so reprojecting the lifted mesh reproduces the patch
coordinates exactly whatever the estimates are.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BehindCameraVertexError, IncompleteLandmarksError
from .facemodel import (
    CORNER_LANDMARKS,
    LEFT_EYE_CORNERS,
    RIGHT_EYE_CORNERS,
    Pose,
    ReferenceFaceModel,
    eye_center_distance,
    face_center_camera,
)
from .geometry import CameraIntrinsics, backproject_unit_ray


@dataclass(frozen=True)
class PatchMesh:
    """Reconstruction output: vertices (u, v, d) in patch pixels.

    tex_coords are normalized into the patch ([0,1]^2); landmark_map sends
    iBUG landmark ids to vertex indices and must contain the six corners.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    tex_coords: np.ndarray
    landmark_map: dict[int, int]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        tc = np.asarray(self.tex_coords, dtype=np.float64).reshape(-1, 2)
        if v.shape[0] == 0:
            raise ValueError("mesh has no vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite vertex coordinates")
        if tc.shape[0] != v.shape[0]:
            raise ValueError("tex_coords count differs from vertex count")
        if t.size and (t.min() < 0 or t.max() >= v.shape[0]):
            raise ValueError("triangle indices out of range")
        if np.any(tc < -1e-6) or np.any(tc > 1 + 1e-6):
            raise ValueError("tex_coords outside [0, 1]")
        missing = [i for i in CORNER_LANDMARKS if i not in self.landmark_map]
        if missing:
            raise IncompleteLandmarksError(f"landmark_map missing corners {missing}")
        bad = [i for i, j in self.landmark_map.items() if not (0 <= j < v.shape[0])]
        if bad:
            raise ValueError(f"landmark_map entries {bad} point outside the mesh")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "tex_coords", tc)
        object.__setattr__(self, "landmark_map", dict(self.landmark_map))

    def landmark_vertices(self, ids) -> np.ndarray:
        return self.vertices[[self.landmark_map[i] for i in ids]]


@dataclass(frozen=True)
class CameraMesh:
    """Metric mesh in camera coordinates (mm) with its 3D gaze target."""

    vertices: np.ndarray
    triangles: np.ndarray
    tex_coords: np.ndarray
    landmark_map: dict[int, int]
    gaze_target: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        g = np.asarray(self.gaze_target, dtype=np.float64).reshape(3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "tex_coords", np.asarray(self.tex_coords, dtype=np.float64).reshape(-1, 2))
        object.__setattr__(self, "gaze_target", g)
        object.__setattr__(self, "landmark_map", dict(self.landmark_map))

    def with_vertices(self, vertices, gaze_target) -> "CameraMesh":
        return replace(self, vertices=vertices, gaze_target=gaze_target)

    def landmark_vertices(self, ids) -> np.ndarray:
        return self.vertices[[self.landmark_map[i] for i in ids]]


@dataclass(frozen=True)
class MatchingParams:
    """Ray-range model lambda = alpha * d + beta (alpha mm/px, beta mm)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and np.isfinite(self.beta)):
            raise ValueError(f"invalid matching params alpha={self.alpha} beta={self.beta}")


def estimate_alpha(mesh: PatchMesh, model: ReferenceFaceModel) -> float:
    """Pixel-to-mm scale: reference eye-center distance over the mesh's.

    Both distances are 3D (the mesh one in patch-pixel units including d).
    """
    l_p = eye_center_distance(
        mesh.vertices,
        [mesh.landmark_map[i] for i in RIGHT_EYE_CORNERS],
        [mesh.landmark_map[i] for i in LEFT_EYE_CORNERS],
    )
    return model.eye_center_distance_mm / l_p


def estimate_beta(mesh: PatchMesh, alpha: float, pnp_pose: Pose, model: ReferenceFaceModel) -> float:
    """Range offset anchoring the face center: ||v_bar|| - alpha * d_bar.

    d_bar is the mean patch depth of the six corner landmark vertices;
    v_bar is the reference face center under the PnP pose.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    d_bar = float(mesh.landmark_vertices(CORNER_LANDMARKS)[:, 2].mean())
    v_bar = face_center_camera(pnp_pose, model)
    return float(np.linalg.norm(v_bar)) - alpha * d_bar


def lift_to_camera(
    mesh: PatchMesh,
    C: CameraIntrinsics,
    T: np.ndarray,
    params: MatchingParams,
    gaze_target,
) -> CameraMesh:
    """Place every vertex at range alpha*d + beta along its back-projected ray.

    Topology, texture coordinates and the landmark map carry over; the gaze
    target is attached unchanged (it is already in camera coordinates).
    """
    lam = params.alpha * mesh.vertices[:, 2] + params.beta
    if np.any(lam <= 0):
        bad = np.nonzero(lam <= 0)[0]
        raise BehindCameraVertexError(
            f"{bad.size} vertices have non-positive range (first: {bad[:8].tolist()})",
            indices=bad.tolist(),
        )
    rays = backproject_unit_ray(mesh.vertices[:, :2], C, T)
    return CameraMesh(
        vertices=lam[:, None] * rays,
        triangles=mesh.triangles,
        tex_coords=mesh.tex_coords,
        landmark_map=mesh.landmark_map,
        gaze_target=np.asarray(gaze_target, dtype=np.float64).reshape(3),
    )
