"""End-to-end synthesis runs: planning, per-sample work, bookkeeping.

A run is planned up front (PnP, source admission, pose sampling and the
global background/lighting schedule) and then executed sample by sample,
optionally in worker processes.  All randomness is assigned during planning
from (seed, sample index, purpose) sub-seeds, so outputs are byte-identical
for any worker count.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    LabelRecord,
    SampleManifestEntry,
    SampleRecord,
    append_labels,
    read_image,
    read_manifest,
    read_mesh,
    write_sample,
)
from .errors import (
    BehindCameraVertexError,
    ConfigError,
    GazeSynthError,
    NoValidPoseError,
)
from .facemodel import Pose, ReferenceFaceModel, face_center_camera, solve_head_pose
from .geometry import Angles, crop_matrix
from .matching import MatchingParams, estimate_alpha, estimate_beta, lift_to_camera
from .normalization import (
    NormalizedCamera,
    default_normalized_intrinsics,
    normalization_rotation,
    normalize_labels,
    place_for_rendering,
)
from .novelview import PlannedPose, PosePool, SynthesisPlan, admit_source, plan_poses, retarget
from .render import (
    BackgroundSpec,
    RenderConfig,
    ScenePool,
    background_schedule,
    composite,
    downscale,
    rasterize,
    warp_homography,
)

log = logging.getLogger("gazesynth")


@dataclass
class RunConfig:
    """Everything a synthesis run needs; defaults match the standard protocol."""

    manifest: Path
    pose_pool: Path
    out_dir: Path
    scene_dir: Path | None = None
    per_image: int = 16
    max_pose_norm_deg: float = 80.0
    frontal_source_max_deg: float | None = 15.0
    bg_ratio: tuple[int, int, int] = (1, 1, 3)
    weak_light_fraction: float = 0.5
    ambient_range: tuple[float, float] = (0.25, 0.75)
    seed: int = 0
    emit_224: bool = False
    workers: int = 1
    normalized_focal: float = 960.0
    normalized_size: int = 448
    face_distance_mm: float = 300.0
    reference_model_csv: Path | None = None

    def normalized_camera(self) -> NormalizedCamera:
        return NormalizedCamera(
            intrinsics=default_normalized_intrinsics(self.normalized_focal, self.normalized_size),
            face_distance_mm=self.face_distance_mm,
        )

    def reference_model(self) -> ReferenceFaceModel:
        if self.reference_model_csv is not None:
            return ReferenceFaceModel.from_csv(self.reference_model_csv)
        return ReferenceFaceModel.generic()

    def snapshot(self) -> dict:
        return {
            "version": __version__,
            "manifest": str(self.manifest),
            "pose_pool": str(self.pose_pool),
            "out_dir": str(self.out_dir),
            "scene_dir": None if self.scene_dir is None else str(self.scene_dir),
            "per_image": self.per_image,
            "max_pose_norm_deg": self.max_pose_norm_deg,
            "frontal_source_max_deg": self.frontal_source_max_deg,
            "bg_ratio": list(self.bg_ratio),
            "weak_light_fraction": self.weak_light_fraction,
            "ambient_range": list(self.ambient_range),
            "seed": self.seed,
            "emit_224": self.emit_224,
            "workers": self.workers,
            "normalized_focal": self.normalized_focal,
            "normalized_size": self.normalized_size,
            "face_distance_mm": self.face_distance_mm,
            "reference_model_csv": (
                None if self.reference_model_csv is None else str(self.reference_model_csv)
            ),
        }


@dataclass
class RunSummary:
    sources_total: int = 0
    sources_admitted: int = 0
    sources_rejected: int = 0
    poses_filtered: int = 0
    images_written: int = 0
    lambda_failures: int = 0
    other_failures: int = 0
    failure_messages: list[str] = field(default_factory=list)

    def consistent(self, per_image: int) -> bool:
        return self.images_written == (
            self.sources_admitted * per_image
            - self.poses_filtered
            - self.lambda_failures
            - self.other_failures
        )


@dataclass
class _PoseJob:
    pose_index: int
    R: np.ndarray
    t: np.ndarray
    bg: BackgroundSpec
    ambient: float


@dataclass
class _SampleJob:
    entry: SampleManifestEntry
    src_R: np.ndarray
    src_t: np.ndarray
    poses: list[_PoseJob]
    seed_trace: str


@dataclass
class _SampleResult:
    labels: list[LabelRecord]
    lambda_failures: int = 0
    other_failures: int = 0
    error: str | None = None


def load_pose_pool(path: str | Path, distance_mm: float = 300.0) -> PosePool:
    path = Path(path)
    if path.suffix == ".jsonl":
        return PosePool.from_labels_jsonl(path, distance_mm)
    return PosePool.from_csv(path, distance_mm)


def _source_head_angles(pose: Pose, gaze_target, model: ReferenceFaceModel) -> Angles:
    """Normalized head pose of the source, as used by the admission filter."""
    c = face_center_camera(pose, model)
    M = normalization_rotation(c, pose.R)
    _, head = normalize_labels(gaze_target, c, pose.R, M)
    return head


# one scene pool per (directory, size) per process
_SCENE_CACHE: dict[tuple[str, int], ScenePool] = {}


def _scene_pool(scene_dir, size: int) -> ScenePool | None:
    if scene_dir is None:
        return None
    key = (str(scene_dir), size)
    if key not in _SCENE_CACHE:
        _SCENE_CACHE[key] = ScenePool(scene_dir, size)
    return _SCENE_CACHE[key]


def _run_sample(args: tuple[_SampleJob, dict]) -> _SampleResult:
    """Worker entry: one manifest entry through lift, retarget, render, write."""
    job, ctx = args
    entry = job.entry
    try:
        model: ReferenceFaceModel = ctx["model"]
        cam: NormalizedCamera = ctx["cam"]
        scenes = _scene_pool(ctx["scene_dir"], cam.intrinsics.width)

        src_pose = Pose(job.src_R, job.src_t)
        mesh = read_mesh(entry.mesh_path)
        T = crop_matrix(entry.crop)
        source_img = read_image(entry.image_path)
        pw, ph = entry.crop.patch_size()
        texture = warp_homography(source_img, T, (pw, ph))

        alpha = estimate_alpha(mesh, model)
        beta = estimate_beta(mesh, alpha, src_pose, model)
        lifted = lift_to_camera(
            mesh, entry.intrinsics, T, MatchingParams(alpha, beta), entry.gaze_target_mm
        )
    except BehindCameraVertexError as e:
        return _SampleResult(
            labels=[], lambda_failures=len(job.poses), error=f"{entry.sample_id}: {e}"
        )
    except GazeSynthError as e:
        return _SampleResult(
            labels=[], other_failures=len(job.poses), error=f"{entry.sample_id}: {e}"
        )

    labels = []
    lam_fail = 0
    other_fail = 0
    err = None
    for pj in job.poses:
        try:
            tgt_pose = Pose(pj.R, pj.t)
            moved = retarget(lifted, src_pose, tgt_pose)
            face_c = face_center_camera(tgt_pose, model)
            M = normalization_rotation(face_c, tgt_pose.R)
            gaze, head = normalize_labels(moved.gaze_target, face_c, tgt_pose.R, M)
            placed = place_for_rendering(moved, face_c, M, cam)
            fb = rasterize(placed, texture, cam.intrinsics, RenderConfig(
                out_size=cam.intrinsics.width, ambient=pj.ambient, background=pj.bg,
            ))
            img = composite(fb, pj.bg, scenes)
            record = SampleRecord(
                image=img,
                gaze=gaze,
                head=head,
                bg_kind=pj.bg.kind,
                ambient=pj.ambient,
                source_sample_id=entry.sample_id,
                pose_index=pj.pose_index,
                seed_trace=f"{job.seed_trace}/pose{pj.pose_index}",
                image_224=downscale(img) if ctx["emit_224"] else None,
            )
            labels.append(write_sample(record, ctx["out_dir"]))
        except GazeSynthError as e:
            lam_fail += 1
            err = f"{entry.sample_id}/pose{pj.pose_index}: {e}"
    return _SampleResult(labels=labels, lambda_failures=lam_fail, other_failures=other_fail, error=err)


def plan_run(cfg: RunConfig):
    """Resolve inputs, fit source poses, admit sources, sample target poses."""
    entries = read_manifest(cfg.manifest)
    pool = load_pose_pool(cfg.pose_pool, cfg.face_distance_mm)
    plan = SynthesisPlan(
        per_image=cfg.per_image,
        max_pose_norm_deg=cfg.max_pose_norm_deg,
        frontal_source_max_deg=cfg.frontal_source_max_deg,
        master_seed=cfg.seed,
    )
    model = cfg.reference_model()
    summary = RunSummary(sources_total=len(entries))

    jobs: list[_SampleJob] = []
    planned_poses: list[list[PlannedPose]] = []
    for idx, entry in enumerate(entries):
        try:
            pnp = solve_head_pose(entry.landmarks, entry.intrinsics, model)
            head = _source_head_angles(pnp.pose, entry.gaze_target_mm, model)
        except GazeSynthError as e:
            summary.sources_rejected += 1
            summary.failure_messages.append(f"{entry.sample_id}: source fit failed: {e}")
            continue
        if not admit_source(head, plan):
            summary.sources_rejected += 1
            continue
        summary.sources_admitted += 1
        try:
            poses = plan_poses(pool, plan, idx)
        except NoValidPoseError:
            poses = []
        summary.poses_filtered += cfg.per_image - len(poses)
        jobs.append(
            _SampleJob(
                entry=entry,
                src_R=pnp.pose.R,
                src_t=pnp.pose.t,
                poses=[],
                seed_trace=f"{cfg.seed}/{entry.sample_id}",
            )
        )
        planned_poses.append(poses)

    n_images = sum(len(p) for p in planned_poses)
    needs_scenes = cfg.bg_ratio[2] > 0 and n_images > 0
    n_scenes = 0
    if needs_scenes:
        if cfg.scene_dir is None:
            raise ConfigError("background ratio requires scenes but no scene directory given")
        n_scenes = len(_scene_pool(cfg.scene_dir, cfg.normalized_size))
    schedule = background_schedule(
        n_images, cfg.seed, n_scenes, cfg.bg_ratio, cfg.weak_light_fraction, cfg.ambient_range
    )
    k = 0
    for job, poses in zip(jobs, planned_poses):
        for pose_index, planned in enumerate(poses):
            bg, ambient = schedule[k]
            k += 1
            job.poses.append(
                _PoseJob(pose_index=pose_index, R=planned.pose.R, t=planned.pose.t, bg=bg, ambient=ambient)
            )
    return jobs, summary, model


def run_synthesize(cfg: RunConfig) -> RunSummary:
    """Execute a full synthesis run; returns the bookkeeping summary."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_config.json").write_text(json.dumps(cfg.snapshot(), indent=2))

    jobs, summary, model = plan_run(cfg)
    ctx = {
        "model": model,
        "cam": cfg.normalized_camera(),
        "scene_dir": cfg.scene_dir,
        "out_dir": out_dir,
        "emit_224": cfg.emit_224,
    }
    args = [(job, ctx) for job in jobs]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_sample, args, chunksize=1))
    else:
        results = [_run_sample(a) for a in args]

    labels: list[LabelRecord] = []
    for res in results:
        labels.extend(res.labels)
        summary.lambda_failures += res.lambda_failures
        summary.other_failures += res.other_failures
        if res.error:
            summary.failure_messages.append(res.error)
            log.warning("sample failure: %s", res.error)

    labels_path = out_dir / "labels.jsonl"
    labels_path.write_text("")
    append_labels(labels, labels_path)
    summary.images_written = len(labels)
    return summary


# -- augmentation ------------------------------------------------------------

def load_landmark_file(path: str | Path) -> dict[str, np.ndarray]:
    """JSONL of {"file": ..., "landmarks": [[x, y], ...]} keyed by file."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out[obj["file"]] = np.asarray(obj["landmarks"], dtype=np.float64)
    return out


def run_augment(
    labels_path: str | Path,
    images_dir: str | Path,
    out_dir: str | Path,
    mode: str,
    seed: int = 0,
    scene_dir: str | Path | None = None,
    landmarks_path: str | Path | None = None,
) -> tuple[int, int]:
    """Emit flipped or background-switched copies; returns (written, skipped)."""
    from .dataio import read_labels, write_png
    from .render import face_mask_from_landmarks, flip_horizontal, switch_background
    from .seeding import derive_subseed

    if mode not in ("flip", "bg"):
        raise ConfigError(f"unknown augment mode {mode!r}")
    records = read_labels(labels_path)
    images_dir = Path(images_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    landmarks = None
    if mode == "bg":
        if landmarks_path is None:
            raise ConfigError("bg mode needs a landmark file")
        if scene_dir is None:
            raise ConfigError("bg mode needs a scene directory")
        landmarks = load_landmark_file(landmarks_path)

    written = skipped = 0
    out_records = []
    for rec in records:
        img = read_image(images_dir / rec.file)
        if mode == "flip":
            flipped, gaze, head = flip_horizontal(
                img, Angles(rec.gaze_pitch, rec.gaze_yaw), Angles(rec.head_pitch, rec.head_yaw)
            )
            write_png(flipped, out_dir / rec.file)
            out_records.append(
                LabelRecord(
                    file=rec.file,
                    gaze_pitch=gaze.pitch,
                    gaze_yaw=gaze.yaw,
                    head_pitch=head.pitch,
                    head_yaw=head.yaw,
                    bg_kind=rec.bg_kind,
                    ambient=rec.ambient,
                    source_sample_id=rec.source_sample_id,
                    pose_index=rec.pose_index,
                    seed_trace=rec.seed_trace + "/flip",
                )
            )
        else:
            if rec.file not in landmarks:
                log.warning("no landmarks for %s; skipped", rec.file)
                skipped += 1
                continue
            scenes = _scene_pool(scene_dir, img.shape[0])
            sid = derive_subseed(seed, rec.file, "bg-switch") % len(scenes)
            mask = face_mask_from_landmarks(landmarks[rec.file], img.shape[:2])
            switched = switch_background(img, mask, scenes.get(int(sid)))
            write_png(switched, out_dir / rec.file)
            out_records.append(
                LabelRecord(
                    file=rec.file,
                    gaze_pitch=rec.gaze_pitch,
                    gaze_yaw=rec.gaze_yaw,
                    head_pitch=rec.head_pitch,
                    head_yaw=rec.head_yaw,
                    bg_kind="scene",
                    ambient=rec.ambient,
                    source_sample_id=rec.source_sample_id,
                    pose_index=rec.pose_index,
                    seed_trace=rec.seed_trace + "/bg",
                )
            )
        written += 1
    labels_out = out_dir / "labels.jsonl"
    labels_out.write_text("")
    append_labels(out_records, labels_out)
    return written, skipped


# -- preview -----------------------------------------------------------------

GAZE_ARROW_MM = 100.0


def render_preview(
    entry: SampleManifestEntry,
    poses: list[Angles],
    cfg: RunConfig,
) -> np.ndarray:
    """Montage of the sample at each pose with the gaze direction drawn in red.

    The arrow starts at the projected face center and ends at the projection
    of face_center + GAZE_ARROW_MM * (unit normalized gaze direction).
    """
    from PIL import Image, ImageDraw

    from .geometry import head_rotation, project_point

    model = cfg.reference_model()
    cam = cfg.normalized_camera()
    pnp = solve_head_pose(entry.landmarks, entry.intrinsics, model)
    mesh = read_mesh(entry.mesh_path)
    T = crop_matrix(entry.crop)
    source_img = read_image(entry.image_path)
    texture = warp_homography(source_img, T, entry.crop.patch_size())
    alpha = estimate_alpha(mesh, model)
    beta = estimate_beta(mesh, alpha, pnp.pose, model)
    lifted = lift_to_camera(mesh, entry.intrinsics, T, MatchingParams(alpha, beta), entry.gaze_target_mm)

    size = cam.intrinsics.width
    cells = []
    for a in poses:
        tgt_pose = Pose(head_rotation(a), np.array([0.0, 0.0, cfg.face_distance_mm]))
        moved = retarget(lifted, pnp.pose, tgt_pose)
        face_c = face_center_camera(tgt_pose, model)
        M = normalization_rotation(face_c, tgt_pose.R)
        placed = place_for_rendering(moved, face_c, M, cam)
        fb = rasterize(placed, texture, cam.intrinsics, RenderConfig(out_size=size))
        img = composite(fb, BackgroundSpec("black"), None)

        center_n = np.array([0.0, 0.0, cfg.face_distance_mm])
        gaze_dir = placed.gaze_target - center_n
        gaze_dir = gaze_dir / np.linalg.norm(gaze_dir)
        p0 = project_point(cam.intrinsics, center_n)
        p1 = project_point(cam.intrinsics, center_n + GAZE_ARROW_MM * gaze_dir)
        pil = Image.fromarray(img)
        draw = ImageDraw.Draw(pil)
        draw.line([tuple(p0), tuple(p1)], fill=(255, 0, 0), width=3)
        r = 4
        draw.ellipse([p0[0] - r, p0[1] - r, p0[0] + r, p0[1] + r], fill=(255, 0, 0))
        cells.append(np.asarray(pil))

    n = len(cells)
    cols = int(math.ceil(math.sqrt(n)))
    rows = int(math.ceil(n / cols))
    grid = np.zeros((rows * size, cols * size, 3), dtype=np.uint8)
    for i, cell in enumerate(cells):
        r, c = divmod(i, cols)
        grid[r * size : (r + 1) * size, c * size : (c + 1) * size] = cell
    return grid
