"""Procedural synthetic faces with exactly known geometry for tests and demos.

A fixture starts from the 68-landmark reference model, grows a coarse
surface by Delaunay triangulation plus midpoint subdivision, is placed at a
known pose and projected through a known camera and crop.  Patch depths are
constructed so that the ray-range model lambda = alpha*d + beta holds
exactly for the recorded ground-truth alpha/beta, which makes every
downstream operation checkable against the construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from .dataio import SampleManifestEntry, manifest_entry_to_json, write_mesh, write_png
from .errors import InvalidSpecError
from .facemodel import (
    CORNER_LANDMARKS,
    LEFT_EYE_CORNERS,
    RIGHT_EYE_CORNERS,
    Pose,
    ReferenceFaceModel,
)
from .geometry import CameraIntrinsics, CropSpec, crop_matrix, project_point, rot_x, rot_y, rot_z
from .matching import PatchMesh
from .render import warp_homography
from .seeding import derive_subseed

# fraction of the mean corner range used as the ground-truth beta; keeping it
# below 1 gives the corner vertices a clearly positive mean patch depth, so
# the range model's alpha term carries real weight
_BETA_FRACTION = 0.6


@dataclass(frozen=True)
class SyntheticFaceSpec:
    seed: int
    pose: Pose
    camera: CameraIntrinsics
    crop: CropSpec
    gaze_target_mm: np.ndarray
    subdivision: int = 1

    def __post_init__(self):
        object.__setattr__(
            self, "gaze_target_mm", np.asarray(self.gaze_target_mm, dtype=np.float64).reshape(3)
        )
        if self.subdivision < 0:
            raise InvalidSpecError("subdivision must be >= 0")


@dataclass(frozen=True)
class FixtureGroundTruth:
    """Construction constants: what a perfect pipeline would recover."""

    alpha: float
    beta: float
    pose: Pose
    camera_vertices: np.ndarray  # (N, 3) true mm positions
    ranges: np.ndarray  # (N,) true distances from the camera origin
    gaze_target_mm: np.ndarray


@dataclass(frozen=True)
class FixtureSample:
    mesh: PatchMesh
    texture: np.ndarray  # patch image the tex_coords index into
    landmarks_2d: dict[int, tuple[float, float]]  # source-image frame
    spec: SyntheticFaceSpec
    truth: FixtureGroundTruth


def _subdivide(verts: np.ndarray, tris: np.ndarray, levels: int, bulge) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint subdivision; new vertices get a smooth forward bulge."""
    verts = list(map(np.asarray, verts))
    for _ in range(levels):
        edge_mid: dict[tuple[int, int], int] = {}
        new_tris = []

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in edge_mid:
                m = (verts[a] + verts[b]) / 2.0
                m = m + np.array([0.0, 0.0, -bulge(m[0], m[1])])
                edge_mid[key] = len(verts)
                verts.append(m)
            return edge_mid[key]

        for t in tris:
            a, b, c = int(t[0]), int(t[1]), int(t[2])
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_tris += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        tris = np.asarray(new_tris, dtype=np.int64)
    return np.asarray(verts, dtype=np.float64), tris


def _face_surface(model: ReferenceFaceModel, subdivision: int) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate the 68 landmarks in the frontal plane and refine."""
    base = model.points
    tri = Delaunay(base[:, :2])

    def bulge(x, y):
        # gentle convexity so subdivided faces are not piecewise flat
        return 5.0 * math.exp(-((x / 55.0) ** 2 + ((y - 8.0) / 65.0) ** 2))

    return _subdivide(base, np.asarray(tri.simplices, dtype=np.int64), subdivision, bulge)


def _procedural_texture(size: tuple[int, int], seed: int) -> np.ndarray:
    """Skin-toned patch texture with seeded low-frequency variation."""
    w, h = size
    rng = np.random.Generator(np.random.PCG64(derive_subseed(seed, "fixture-texture")))
    coarse = rng.uniform(-1.0, 1.0, size=(9, 9, 3))
    ys = np.linspace(0, 8, h)
    xs = np.linspace(0, 8, w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, 8)
    x1 = np.minimum(x0 + 1, 8)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    field = (
        coarse[y0][:, x0] * (1 - fy) * (1 - fx)
        + coarse[y0][:, x1] * (1 - fy) * fx
        + coarse[y1][:, x0] * fy * (1 - fx)
        + coarse[y1][:, x1] * fy * fx
    )
    base = np.array([198.0, 158.0, 138.0])
    grad = np.linspace(-14.0, 14.0, h)[:, None, None]
    img = base + 26.0 * field + grad
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def generate_face(spec: SyntheticFaceSpec, model: ReferenceFaceModel | None = None) -> FixtureSample:
    """Build one synthetic face with exact ground truth.

    The patch mesh projects to the exact (u, v) of the true 3D surface, and
    d is (range - beta) / alpha for the recorded alpha/beta, so lifting with
    the ground-truth parameters reproduces the true vertex ranges.
    """
    model = model or ReferenceFaceModel.generic()
    verts_model, tris = _face_surface(model, spec.subdivision)
    cam_verts = spec.pose.apply(verts_model)
    if np.any(cam_verts[:, 2] <= 0):
        raise InvalidSpecError("pose places part of the face behind the camera")

    uv_src = project_point(spec.camera, cam_verts)
    T = crop_matrix(spec.crop)
    uv_patch = uv_src @ T[:2, :2].T + T[:2, 2]
    ranges = np.linalg.norm(cam_verts, axis=1)

    corner_v = [int(i) for i in CORNER_LANDMARKS]
    right = uv_patch[list(RIGHT_EYE_CORNERS)].mean(axis=0)
    left = uv_patch[list(LEFT_EYE_CORNERS)].mean(axis=0)
    l_p2d = float(np.linalg.norm(left - right))
    alpha = model.eye_center_distance_mm / l_p2d
    beta = _BETA_FRACTION * float(ranges[corner_v].mean())
    d = (ranges - beta) / alpha

    pw, ph = spec.crop.patch_size()
    tex_coords = np.clip(
        np.column_stack([uv_patch[:, 0] / (pw - 1), uv_patch[:, 1] / (ph - 1)]), 0.0, 1.0
    )
    mesh = PatchMesh(
        vertices=np.column_stack([uv_patch, d]),
        triangles=tris,
        tex_coords=tex_coords,
        landmark_map={i: i for i in range(68)},
    )
    landmarks_2d = {i: (float(uv_src[i, 0]), float(uv_src[i, 1])) for i in range(68)}
    truth = FixtureGroundTruth(
        alpha=alpha,
        beta=beta,
        pose=spec.pose,
        camera_vertices=cam_verts,
        ranges=ranges,
        gaze_target_mm=spec.gaze_target_mm,
    )
    return FixtureSample(
        mesh=mesh,
        texture=_procedural_texture((pw, ph), spec.seed),
        landmarks_2d=landmarks_2d,
        spec=spec,
        truth=truth,
    )


def auto_crop(landmarks_2d: dict[int, tuple[float, float]], patch_size: int = 256, margin: float = 1.45) -> CropSpec:
    """Square crop around the landmark bounding box, scaled to the patch size."""
    pts = np.asarray(list(landmarks_2d.values()), dtype=np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = (lo + hi) / 2.0
    side = float(max(hi - lo)) * margin
    return CropSpec(
        center_x=float(center[0]),
        center_y=float(center[1]),
        box_w=side,
        box_h=side,
        scale_x=patch_size / side,
        scale_y=patch_size / side,
    )


def random_face_spec(
    seed: int,
    camera: CameraIntrinsics | None = None,
    max_rot_deg: float = 8.0,
    subdivision: int = 1,
    patch_size: int = 256,
    model: ReferenceFaceModel | None = None,
) -> SyntheticFaceSpec:
    """Near-frontal randomized spec whose crop is fit to the projected face."""
    model = model or ReferenceFaceModel.generic()
    camera = camera or CameraIntrinsics(fx=850.0, fy=850.0, cx=320.0, cy=240.0, width=640, height=480)
    rng = np.random.Generator(np.random.PCG64(derive_subseed(seed, "fixture-spec")))
    yaw, pitch = rng.uniform(-max_rot_deg, max_rot_deg, 2)
    roll = rng.uniform(-5.0, 5.0)
    R = rot_y(math.radians(yaw)) @ rot_x(math.radians(pitch)) @ rot_z(math.radians(roll))
    t = np.array([rng.uniform(-25, 25), rng.uniform(-20, 20), rng.uniform(380, 480)])
    gaze_target = np.array([rng.uniform(-150, 150), rng.uniform(-100, 100), rng.uniform(-20, 20)])

    pose = Pose(R, t)
    lm2d = {i: tuple(project_point(camera, pose.apply(model.points[i]))) for i in range(68)}
    crop = auto_crop(lm2d, patch_size)
    return SyntheticFaceSpec(
        seed=seed, pose=pose, camera=camera, crop=crop,
        gaze_target_mm=gaze_target, subdivision=subdivision,
    )


def write_fixture(sample: FixtureSample, out_dir: str | Path, sample_id: str) -> SampleManifestEntry:
    """Write mesh, source image and ground truth; return the manifest entry.

    The source image is the patch texture warped back into the source frame,
    so re-extracting the patch through the crop reproduces it closely.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = sample.spec
    mesh_path = out_dir / f"{sample_id}.obj"
    write_mesh(sample.mesh, mesh_path)

    T = crop_matrix(spec.crop)
    src_img = warp_homography(
        sample.texture, np.linalg.inv(T), (spec.camera.width, spec.camera.height)
    )
    image_path = out_dir / f"{sample_id}.png"
    write_png(src_img, image_path)

    truth_path = out_dir / f"{sample_id}.gt.json"
    truth_path.write_text(
        json.dumps(
            {
                "alpha": sample.truth.alpha,
                "beta": sample.truth.beta,
                "R": sample.truth.pose.R.tolist(),
                "t": sample.truth.pose.t.tolist(),
            }
        )
    )
    return SampleManifestEntry(
        sample_id=sample_id,
        image_path=image_path,
        mesh_path=mesh_path,
        landmarks=sample.landmarks_2d,
        intrinsics=spec.camera,
        crop=spec.crop,
        gaze_target_mm=spec.gaze_target_mm,
    )


def write_fixture_set(
    out_dir: str | Path,
    count: int,
    seed: int = 0,
    subdivision: int = 1,
    max_rot_deg: float = 8.0,
    patch_size: int = 256,
) -> Path:
    """Generate a ready-to-run manifest plus meshes/images; returns its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for k in range(count):
        spec = random_face_spec(
            derive_subseed(seed, k, "fixture"),
            max_rot_deg=max_rot_deg,
            subdivision=subdivision,
            patch_size=patch_size,
        )
        sample = generate_face(spec)
        entry = write_fixture(sample, out_dir, f"fix{k:04d}")
        lines.append(manifest_entry_to_json(entry, base=out_dir))
    manifest = out_dir / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + ("\n" if lines else ""))
    return manifest
