"""Generic 68-landmark 3D face model and pose estimation from 2D landmarks.

The embedded model is a symmetric generic face in millimeters, expressed in
the camera-aligned convention (+x image-right, +y down, face looking along
-z) and centered so the centroid of the four eye corners and two mouth
corners is the origin.  With that choice a frontal face straight ahead of
the camera has pose rotation = identity and the pose translation IS the
face center.  A different model can be substituted from a CSV asset.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateFaceError,
    InsufficientCorrespondencesError,
    PnPConvergenceError,
)
from .geometry import (
    CameraIntrinsics,
    require_rotation,
    rodrigues,
    rot_x,
    rot_y,
    skew,
)

# iBUG 68 numbering: eye corners (36, 39) right eye, (42, 45) left eye,
# mouth corners 48 and 54.
CORNER_LANDMARKS = (36, 39, 42, 45, 48, 54)
RIGHT_EYE_CORNERS = (36, 39)
LEFT_EYE_CORNERS = (42, 45)

# fmt: off
_GENERIC_FACE_MM = np.array([
    (-71.78, -14.50, 48.41), (-71.41, 0.11, 47.99), (-68.03, 14.04, 44.15),
    (-61.76, 26.81, 37.35), (-52.87, 37.94, 28.39), (-41.75, 47.04, 18.41),
    (-28.85, 53.79, 8.71), (-14.74, 57.93, 0.78), (0.00, 59.33, -3.33),
    (14.74, 57.93, 0.78), (28.85, 53.79, 8.71), (41.75, 47.04, 18.41),
    (52.87, 37.94, 28.39), (61.76, 26.81, 37.35), (68.03, 14.04, 44.15),
    (71.41, 0.11, 47.99), (71.78, -14.50, 48.41),
    (-52.00, -30.67, 6.67), (-40.00, -35.67, -0.33), (-26.00, -37.67, -4.33),
    (-13.00, -36.67, -6.33), (-4.00, -32.67, -6.33),
    (4.00, -32.67, -6.33), (13.00, -36.67, -6.33), (26.00, -37.67, -4.33),
    (40.00, -35.67, -0.33), (52.00, -30.67, 6.67),
    (0.00, -22.67, -9.33), (0.00, -12.67, -15.33), (0.00, -2.67, -21.33),
    (0.00, 7.33, -25.33),
    (-14.00, 15.33, -13.33), (-7.50, 14.40, -16.12), (0.00, 13.33, -19.33),
    (7.50, 14.40, -16.12), (14.00, 15.33, -13.33),
    (-45.00, -14.67, 4.67), (-36.00, -18.27, 1.17), (-26.50, -18.27, 0.17),
    (-17.00, -14.67, 0.67), (-26.50, -11.87, 0.17), (-36.00, -11.87, 1.17),
    (17.00, -14.67, 0.67), (26.50, -18.27, 0.17), (36.00, -18.27, 1.17),
    (45.00, -14.67, 4.67), (36.00, -11.87, 1.17), (26.50, -11.87, 0.17),
    (-26.00, 29.34, -5.34), (-16.50, 25.83, -9.33), (-6.50, 24.33, -11.33),
    (0.00, 25.13, -11.83), (6.50, 24.33, -11.33), (16.50, 25.83, -9.33),
    (26.00, 29.34, -5.34), (16.50, 33.83, -8.83), (7.00, 35.83, -10.83),
    (0.00, 36.33, -11.33), (-7.00, 35.83, -10.83), (-16.50, 33.83, -8.83),
    (-21.50, 29.33, -6.83), (-7.00, 27.53, -10.83), (0.00, 27.83, -11.33),
    (7.00, 27.53, -10.83), (21.50, 29.33, -6.83), (7.00, 31.13, -10.33),
    (0.00, 31.33, -10.83), (-7.00, 31.13, -10.33),
], dtype=np.float64)
# fmt: on


@dataclass(frozen=True)
class Pose:
    """Rigid transform of the face model into camera coordinates: p -> R p + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", require_rotation(self.R, what="pose rotation"))
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "t", t)

    def apply(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = pts @ self.R.T + self.t
        return out[0] if np.asarray(points).ndim == 1 else out

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class ReferenceFaceModel:
    """68 canonical landmark positions in mm plus the six corner indices."""

    points: np.ndarray
    corner_indices: tuple[int, ...] = CORNER_LANDMARKS
    eye_center_distance_mm: float = field(default=0.0)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (68, 3):
            raise ValueError(f"expected 68x3 landmark table, got {pts.shape}")
        if len(set(self.corner_indices)) != 6 or not all(0 <= i < 68 for i in self.corner_indices):
            raise ValueError(f"bad corner indices {self.corner_indices}")
        object.__setattr__(self, "points", pts)
        d = eye_center_distance(pts, RIGHT_EYE_CORNERS, LEFT_EYE_CORNERS)
        object.__setattr__(self, "eye_center_distance_mm", d)

    def corner_points(self) -> np.ndarray:
        return self.points[list(self.corner_indices)]

    @staticmethod
    def generic() -> "ReferenceFaceModel":
        return ReferenceFaceModel(_GENERIC_FACE_MM.copy())

    @staticmethod
    def from_csv(path: str | Path) -> "ReferenceFaceModel":
        """Load 68 rows of x,y,z (mm); a header row is skipped if non-numeric."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec:
                    continue
                try:
                    rows.append([float(rec[0]), float(rec[1]), float(rec[2])])
                except ValueError:
                    if rows:
                        raise
                    continue  # header
        if len(rows) != 68:
            raise ValueError(f"expected 68 rows in {path}, got {len(rows)}")
        return ReferenceFaceModel(np.asarray(rows, dtype=np.float64))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_mm", "y_mm", "z_mm"])
            for p in self.points:
                w.writerow([f"{c:.6f}" for c in p])


def eye_center_distance(points, right_corners=RIGHT_EYE_CORNERS, left_corners=LEFT_EYE_CORNERS) -> float:
    """Distance between the two eye centers (midpoints of the eye corners).

    Units follow the input (mm for model points, px for patch vertices).
    """
    pts = np.asarray(points, dtype=np.float64)
    right = pts[list(right_corners)].mean(axis=0)
    left = pts[list(left_corners)].mean(axis=0)
    d = float(np.linalg.norm(left - right))
    if d < 1e-9:
        raise DegenerateFaceError("eye centers coincide")
    return d


def face_center_camera(pose: Pose, model: ReferenceFaceModel) -> np.ndarray:
    """Centroid of the six eye/mouth corner landmarks under the given pose.

    This point is the origin of the gaze vector everywhere in the pipeline.
    """
    return pose.apply(model.corner_points()).mean(axis=0)


@dataclass(frozen=True)
class PnPResult:
    pose: Pose
    mean_residual_px: float
    iterations: int


def _reprojection_residual(R, t, model_pts, obs, C: CameraIntrinsics):
    cam = model_pts @ R.T + t
    if np.any(cam[:, 2] <= 1e-6):
        return None, cam
    uv = np.empty((cam.shape[0], 2))
    uv[:, 0] = C.fx * cam[:, 0] / cam[:, 2] + C.cx
    uv[:, 1] = C.fy * cam[:, 1] / cam[:, 2] + C.cy
    return (uv - obs).ravel(), cam


def _lm_refine(R0, t0, model_pts, obs, C: CameraIntrinsics, max_iter=100):
    """Levenberg-Marquardt on reprojection error over a local (rotation, t) chart.

    The step updates R <- exp(skew(dw)) @ R, t <- t + dt.  Damping starts at
    1e-3 * trace(JtJ)/6 and is divided / multiplied by 10 on accept / reject.
    """
    R, t = R0.copy(), t0.copy()
    r, cam = _reprojection_residual(R, t, model_pts, obs, C)
    if r is None:
        return None
    cost = float(r @ r)
    mu = None
    it = 0
    for it in range(1, max_iter + 1):
        n = model_pts.shape[0]
        J = np.empty((2 * n, 6))
        for i in range(n):
            x, y, z = cam[i]
            d_proj = np.array([[C.fx / z, 0.0, -C.fx * x / z**2],
                               [0.0, C.fy / z, -C.fy * y / z**2]])
            J[2 * i : 2 * i + 2, :3] = d_proj @ (-skew(cam[i] - t))
            J[2 * i : 2 * i + 2, 3:] = d_proj
        JtJ = J.T @ J
        g = J.T @ r
        if mu is None:
            mu = 1e-3 * np.trace(JtJ) / 6.0
        accepted = False
        for _ in range(25):
            try:
                delta = np.linalg.solve(JtJ + mu * np.eye(6), -g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            R_new = rodrigues(delta[:3]) @ R
            t_new = t + delta[3:]
            r_new, cam_new = _reprojection_residual(R_new, t_new, model_pts, obs, C)
            if r_new is not None and float(r_new @ r_new) < cost:
                new_cost = float(r_new @ r_new)
                R, t, r, cam = R_new, t_new, r_new, cam_new
                mu /= 10.0
                accepted = True
                break
            mu *= 10.0
        if not accepted:
            break
        step = float(np.linalg.norm(delta))
        rel_drop = (cost - new_cost) / cost if cost > 0 else 0.0
        cost = new_cost
        if step < 1e-10 or rel_drop < 1e-12 or cost < 1e-22:
            break
    mean_res = float(np.mean(np.linalg.norm(r.reshape(-1, 2), axis=1)))
    return R, t, mean_res, it


def _homography_init(model_pts, obs, C: CameraIntrinsics):
    """Plane-based DLT initialization for near-planar landmark sets."""
    centroid = model_pts.mean(axis=0)
    centered = model_pts - centroid
    _, _, vt = np.linalg.svd(centered)
    e1, e2, nrm = vt[0], vt[1], vt[2]
    if np.linalg.det(np.column_stack([e1, e2, nrm])) < 0:
        nrm = -nrm
    plane = centered @ np.column_stack([e1, e2])  # (n, 2)

    # Hartley-normalized DLT for the homography plane -> pixels
    def _norm(pts2):
        c = pts2.mean(axis=0)
        s = math.sqrt(2.0) / max(np.mean(np.linalg.norm(pts2 - c, axis=1)), 1e-12)
        N = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
        return N

    Np, No = _norm(plane), _norm(obs)
    A = []
    for (wx, wy), (u, v) in zip(plane, obs):
        px = Np @ (wx, wy, 1.0)
        ob = No @ (u, v, 1.0)
        A.append([-px[0], -px[1], -1, 0, 0, 0, ob[0] * px[0], ob[0] * px[1], ob[0]])
        A.append([0, 0, 0, -px[0], -px[1], -1, ob[1] * px[0], ob[1] * px[1], ob[1]])
    _, s, vt = np.linalg.svd(np.asarray(A))
    if s[-2] < 1e-12:
        return None
    H = np.linalg.inv(No) @ vt[-1].reshape(3, 3) @ Np
    if not np.all(np.isfinite(H)):
        return None

    B = C.inverse_matrix() @ H
    n1, n2 = np.linalg.norm(B[:, 0]), np.linalg.norm(B[:, 1])
    if n1 < 1e-12 or n2 < 1e-12:
        return None
    for sign in (1.0, -1.0):
        A3 = sign * B
        lam = 2.0 / (n1 + n2)
        r1, r2 = lam * A3[:, 0], lam * A3[:, 1]
        r3 = np.cross(r1, r2)
        U, _, Vt = np.linalg.svd(np.column_stack([r1, r2, r3]))
        R_plane = U @ np.diag([1.0, 1.0, np.linalg.det(U @ Vt)]) @ Vt
        t_plane = lam * A3[:, 2]
        R = R_plane @ np.column_stack([e1, e2, nrm]).T
        t = t_plane - R @ centroid
        if t[2] > 0 and np.all((model_pts @ R.T + t)[:, 2] > 0):
            return R, t
    return None


def _grid_inits(model_pts, obs, C: CameraIntrinsics):
    """Coarse orientation grid with a scale-derived depth, for hard cases."""
    spread_px = float(np.mean(np.linalg.norm(obs - obs.mean(axis=0), axis=1)))
    spread_mm = float(np.mean(np.linalg.norm(model_pts - model_pts.mean(axis=0), axis=1)))
    z0 = min(max(C.fx * spread_mm / max(spread_px, 1e-6), 100.0), 2000.0)
    u_c, v_c = obs.mean(axis=0)
    dir_c = np.array([(u_c - C.cx) / C.fx, (v_c - C.cy) / C.fy, 1.0])
    t0 = z0 * dir_c - np.zeros(3)
    inits = []
    for yaw in (-60, -30, 0, 30, 60):
        for pitch in (-45, 0, 45):
            R = rot_y(math.radians(yaw)) @ rot_x(math.radians(pitch))
            inits.append((R, t0.copy()))
    return inits


def solve_pnp(
    obs,
    model_pts,
    C: CameraIntrinsics,
    max_residual_px: float = 30.0,
) -> PnPResult:
    """Estimate the pose minimizing the sum of squared reprojection errors.

    obs: (n, 2) pixel observations; model_pts: (n, 3) mm positions in the
    model frame, n >= 4.  Deterministic: a plane-homography initialization is
    refined with Levenberg-Marquardt; a coarse orientation grid is tried when
    that leaves a non-trivial residual.
    """
    obs = np.asarray(obs, dtype=np.float64).reshape(-1, 2)
    model_pts = np.asarray(model_pts, dtype=np.float64).reshape(-1, 3)
    if obs.shape[0] != model_pts.shape[0]:
        raise ValueError("observation / model point count mismatch")
    if obs.shape[0] < 4:
        raise InsufficientCorrespondencesError(
            f"need at least 4 correspondences, got {obs.shape[0]}"
        )

    best = None
    init = _homography_init(model_pts, obs, C)
    if init is not None:
        best = _lm_refine(init[0], init[1], model_pts, obs, C)
    if best is None or best[2] > 0.25:
        for R0, t0 in _grid_inits(model_pts, obs, C):
            cand = _lm_refine(R0, t0, model_pts, obs, C)
            if cand is None:
                continue
            if best is None or cand[2] < best[2]:
                best = cand
            if best[2] < 0.25:
                break
    if best is None:
        raise PnPConvergenceError("no initialization kept the face in front of the camera", math.inf)
    R, t, mean_res, iterations = best
    if mean_res > max_residual_px:
        raise PnPConvergenceError(
            f"mean reprojection residual {mean_res:.2f} px exceeds {max_residual_px} px",
            mean_res,
        )
    # orthonormalize against accumulated drift before constructing the Pose
    U, _, Vt = np.linalg.svd(R)
    R = U @ np.diag([1.0, 1.0, np.linalg.det(U @ Vt)]) @ Vt
    return PnPResult(Pose(R, t), mean_res, iterations)


def solve_head_pose(
    landmarks: dict[int, tuple[float, float]] | np.ndarray,
    C: CameraIntrinsics,
    model: ReferenceFaceModel,
) -> PnPResult:
    """Six-corner-landmark pose fit; landmarks indexed by iBUG id."""
    if isinstance(landmarks, dict):
        missing = [i for i in model.corner_indices if i not in landmarks]
        if missing:
            raise InsufficientCorrespondencesError(f"missing corner landmarks {missing}")
        obs = np.array([landmarks[i] for i in model.corner_indices], dtype=np.float64)
    else:
        lm = np.asarray(landmarks, dtype=np.float64)
        obs = lm[list(model.corner_indices)]
    return solve_pnp(obs, model.corner_points(), C)
