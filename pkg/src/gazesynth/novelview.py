"""Target head-pose sampling and rigid retargeting of camera meshes.

Retargeting moves the face from a source pose (Rs, ts) to a target pose
(Rt, tt) with v -> Rt Rs^T (v - ts) + tt, applied identically to vertices
and the gaze target, so all pairwise distances and the gaze direction
relative to the head are preserved exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BehindCameraVertexError, NoValidPoseError
from .facemodel import Pose
from .geometry import Angles, head_rotation
from .matching import CameraMesh
from .seeding import derive_subseed


@dataclass(frozen=True)
class PosePool:
    """Finite set of candidate head poses as (pitch, yaw) radians.

    Entries expand to rotations with the roll-free head_rotation convention;
    translations are fixed on the optical axis at distance_mm.
    """

    pitch: np.ndarray
    yaw: np.ndarray
    distance_mm: float = 300.0
    source: str = ""

    def __post_init__(self):
        p = np.asarray(self.pitch, dtype=np.float64).ravel()
        y = np.asarray(self.yaw, dtype=np.float64).ravel()
        if p.size == 0 or p.size != y.size:
            raise ValueError(f"pose pool needs matching non-empty pitch/yaw, got {p.size}/{y.size}")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite pose pool entries")
        object.__setattr__(self, "pitch", p)
        object.__setattr__(self, "yaw", y)

    def __len__(self) -> int:
        return int(self.pitch.size)

    def norms_deg(self) -> np.ndarray:
        return np.degrees(np.hypot(self.pitch, self.yaw))

    def angles(self, i: int) -> Angles:
        return Angles(float(self.pitch[i]), float(self.yaw[i]))

    def pose(self, i: int) -> Pose:
        R = head_rotation(self.angles(i))
        return Pose(R, np.array([0.0, 0.0, self.distance_mm]))

    @staticmethod
    def from_csv(path: str | Path, distance_mm: float = 300.0) -> "PosePool":
        """Load pitch_deg,yaw_deg rows; a non-numeric header row is skipped."""
        pitch, yaw = [], []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec:
                    continue
                try:
                    p, y = float(rec[0]), float(rec[1])
                except ValueError:
                    if pitch:
                        raise
                    continue
                pitch.append(math.radians(p))
                yaw.append(math.radians(y))
        return PosePool(np.array(pitch), np.array(yaw), distance_mm, source=str(path))

    @staticmethod
    def from_labels_jsonl(path: str | Path, distance_mm: float = 300.0) -> "PosePool":
        """Head poses of a prior run's labels.jsonl (head_pitch/head_yaw radians)."""
        pitch, yaw = [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                pitch.append(float(rec["head_pitch"]))
                yaw.append(float(rec["head_yaw"]))
        return PosePool(np.array(pitch), np.array(yaw), distance_mm, source=str(path))


@dataclass(frozen=True)
class SynthesisPlan:
    """Per-run synthesis protocol constants."""

    per_image: int = 16
    max_pose_norm_deg: float = 80.0
    frontal_source_max_deg: float | None = 15.0
    master_seed: int = 0

    def __post_init__(self):
        if self.per_image < 1:
            raise ValueError("per_image must be >= 1")
        if self.max_pose_norm_deg <= 0:
            raise ValueError("max_pose_norm_deg must be > 0")
        if self.frontal_source_max_deg is not None and self.frontal_source_max_deg <= 0:
            raise ValueError("frontal_source_max_deg must be > 0")


@dataclass(frozen=True)
class PlannedPose:
    """One sampled target pose, keeping its pool identity for provenance."""

    pose: Pose
    angles: Angles
    pool_index: int


def plan_poses(pool: PosePool, plan: SynthesisPlan, sample_index: int) -> list[PlannedPose]:
    """Draw per_image poses uniformly with replacement, then drop extreme ones.

    Entries whose pitch-yaw L2 norm exceeds max_pose_norm_deg are discarded
    after sampling, so fewer than per_image poses may come back.  The draw is
    seeded by (master_seed, sample_index) only; results do not depend on
    execution order.  Raises NoValidPoseError if no pool entry could ever
    pass the filter.
    """
    norms = pool.norms_deg()
    if not np.any(norms <= plan.max_pose_norm_deg):
        raise NoValidPoseError(
            f"no pool entry has pitch-yaw norm <= {plan.max_pose_norm_deg} deg"
        )
    seed = derive_subseed(plan.master_seed, sample_index, "pose-plan")
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.integers(0, len(pool), size=plan.per_image)
    return [
        PlannedPose(pool.pose(int(i)), pool.angles(int(i)), int(i))
        for i in idx
        if norms[int(i)] <= plan.max_pose_norm_deg
    ]


def admit_source(head: Angles, plan: SynthesisPlan) -> bool:
    """Frontal-source filter: both |pitch| and |yaw| strictly below the bound.

    Compared in radians, so an input built with Angles.from_degrees at
    exactly the bound is rejected.
    """
    if plan.frontal_source_max_deg is None:
        return True
    lim = math.radians(plan.frontal_source_max_deg)
    return abs(head.pitch) < lim and abs(head.yaw) < lim


def _transform_mesh(mesh: CameraMesh, R: np.ndarray, t: np.ndarray) -> CameraMesh:
    verts = mesh.vertices @ R.T + t
    gaze = R @ mesh.gaze_target + t
    if np.any(verts[:, 2] <= 0):
        bad = np.nonzero(verts[:, 2] <= 0)[0]
        raise BehindCameraVertexError(
            f"{bad.size} vertices behind camera after transform", indices=bad.tolist()
        )
    return mesh.with_vertices(verts, gaze)


def retarget(mesh: CameraMesh, src_pose: Pose, tgt_pose: Pose) -> CameraMesh:
    """Rigidly move the mesh and gaze target from the source to the target pose."""
    R = tgt_pose.R @ src_pose.R.T
    t = tgt_pose.t - R @ src_pose.t
    return _transform_mesh(mesh, R, t)


def view_transform(mesh: CameraMesh, extrinsics: Pose) -> CameraMesh:
    """Re-express the mesh in a camera displaced by the given extrinsics."""
    return _transform_mesh(mesh, extrinsics.R, extrinsics.t)
