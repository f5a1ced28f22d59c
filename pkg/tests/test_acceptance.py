"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The protocol criteria
share three full synthesis runs (two serial with the same seed, one with 8
workers) over 20 synthetic sources and a 16-pose schedule.
"""

import hashlib
import json
import math
import time

import numpy as np
import pytest

from gazesynth.dataio import read_image, read_labels
from gazesynth.facemodel import (
    CORNER_LANDMARKS,
    Pose,
    ReferenceFaceModel,
    face_center_camera,
    solve_head_pose,
    solve_pnp,
)
from gazesynth.fixtures import generate_face, random_face_spec, write_fixture_set
from gazesynth.geometry import (
    Angles,
    CameraIntrinsics,
    angular_error_deg,
    crop_matrix,
    head_rotation,
    project_point,
    rot_z,
    rotation_angle_deg,
)
from gazesynth.matching import CameraMesh, MatchingParams, estimate_alpha, estimate_beta, lift_to_camera
from gazesynth.normalization import normalization_rotation
from gazesynth.novelview import retarget
from gazesynth.pipeline import RunConfig, plan_run, run_synthesize
from gazesynth.render import RenderConfig, rasterize
from gazesynth.seeding import derive_subseed
from gazesynth.stats import head_pose_support_distance

POOL_ENTRIES = [
    (0.0, 0.0), (10.0, -15.0), (-12.0, 20.0), (25.0, 30.0), (-30.0, -25.0),
    (45.0, 20.0), (-40.0, -35.0), (50.0, 60.0), (-55.0, 40.0), (60.0, -45.0),
    (35.0, -70.0), (-20.0, 75.0),
]  # all pitch-yaw norms <= 79.06 deg


def report(criterion: str, ok: bool, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def protocol_runs(tmp_path_factory):
    """20 sources x 16 poses, run twice serially and once with 8 workers."""
    td = tmp_path_factory.mktemp("acceptance")
    manifest = write_fixture_set(td / "fix", count=20, seed=2024, subdivision=0)
    pool_csv = td / "pool.csv"
    pool_csv.write_text(
        "pitch_deg,yaw_deg\n" + "\n".join(f"{p},{y}" for p, y in POOL_ENTRIES) + "\n"
    )
    scenes = td / "scenes"
    scenes.mkdir()
    rng = np.random.default_rng(7)
    from PIL import Image

    for i in range(4):
        Image.fromarray(rng.integers(0, 256, (96, 128, 3), dtype=np.uint8), "RGB").save(
            scenes / f"scene{i}.png"
        )

    def config(out, workers):
        return RunConfig(
            manifest=manifest, pose_pool=pool_csv, out_dir=td / out,
            scene_dir=scenes, per_image=16, seed=555, emit_224=True, workers=workers,
        )

    t0 = time.time()
    summary_a = run_synthesize(config("run_a", 1))
    elapsed_a = time.time() - t0
    summary_b = run_synthesize(config("run_b", 1))
    summary_c = run_synthesize(config("run_c", 8))
    return {
        "dir": td,
        "manifest": manifest,
        "pool_csv": pool_csv,
        "scenes": scenes,
        "config": config("run_a", 1),
        "summaries": (summary_a, summary_b, summary_c),
        "elapsed_a": elapsed_a,
    }


def test_criterion_1_reprojection_exactness():
    model = ReferenceFaceModel.generic()
    samples = []
    for k in range(50):
        spec = random_face_spec(derive_subseed(42, k, "c1"), subdivision=3)
        samples.append((spec, generate_face(spec)))
    n_verts = samples[0][1].mesh.vertices.shape[0]

    t0 = time.time()
    worst = 0.0
    for spec, sample in samples:
        pose = solve_head_pose(sample.landmarks_2d, spec.camera, model).pose
        alpha = estimate_alpha(sample.mesh, model)
        beta = estimate_beta(sample.mesh, alpha, pose, model)
        T = crop_matrix(spec.crop)
        lifted = lift_to_camera(sample.mesh, spec.camera, T, MatchingParams(alpha, beta),
                                spec.gaze_target_mm)
        uv = project_point(spec.camera, lifted.vertices)
        uv_patch = np.hstack([uv, np.ones((len(uv), 1))]) @ T.T
        worst = max(worst, float(np.abs(uv_patch[:, :2] - sample.mesh.vertices[:, :2]).max()))
    elapsed = time.time() - t0
    ok = worst < 1e-6 and elapsed < 5.0
    report(
        "criterion 1 (reprojection exactness)",
        ok,
        f"50 meshes x {n_verts} vertices, max err {worst:.2e} px (tol 1e-6), {elapsed:.2f}s (< 5s)",
    )


def test_criterion_2_pnp_round_trip():
    model = ReferenceFaceModel.generic()
    C = CameraIntrinsics(960.0, 960.0, 320.0, 240.0, 640, 480)
    rng = np.random.default_rng(derive_subseed(42, "c2"))
    t0 = time.time()
    worst_rot = worst_t = 0.0
    n = 0
    while n < 1000:
        # rotation given by a pitch-yaw vector of norm <= 80 deg plus roll
        p, y = rng.uniform(-80, 80, 2)
        if math.hypot(p, y) > 80.0:
            continue
        roll = rng.uniform(-15, 15)
        R = head_rotation(Angles.from_degrees(p, y)) @ rot_z(math.radians(roll))
        t = np.array([rng.uniform(-60, 60), rng.uniform(-45, 45), rng.uniform(250, 600)])
        pose = Pose(R, t)
        pts = pose.apply(model.corner_points())
        if np.any(pts[:, 2] <= 1.0):
            continue
        obs = project_point(C, pts)
        res = solve_pnp(obs, model.corner_points(), C)
        worst_rot = max(worst_rot, rotation_angle_deg(res.pose.R, R))
        worst_t = max(worst_t, float(np.linalg.norm(res.pose.t - t)))
        n += 1
    elapsed = time.time() - t0
    ok = worst_rot < 0.05 and worst_t < 0.5 and elapsed < 10.0
    report(
        "criterion 2 (PnP round-trip)",
        ok,
        f"1000 poses, max rot {worst_rot:.2e} deg (< 0.05), max t {worst_t:.2e} mm (< 0.5), "
        f"{elapsed:.2f}s (< 10s)",
    )


def test_criterion_3_gaze_label_preservation():
    model = ReferenceFaceModel.generic()
    rng = np.random.default_rng(derive_subseed(42, "c3"))
    worst_angle = 0.0
    worst_dist = 0.0
    n_pairs = 0
    for k in range(10):
        spec = random_face_spec(derive_subseed(42, k, "c3-fix"), subdivision=1)
        sample = generate_face(spec)
        pnp = solve_head_pose(sample.landmarks_2d, spec.camera, model)
        alpha = estimate_alpha(sample.mesh, model)
        beta = estimate_beta(sample.mesh, alpha, pnp.pose, model)
        lifted = lift_to_camera(sample.mesh, spec.camera, crop_matrix(spec.crop),
                                MatchingParams(alpha, beta), spec.gaze_target_mm)
        src_pose = pnp.pose
        src_center = face_center_camera(src_pose, model)
        gaze_dir = lifted.gaze_target - src_center
        pairs = rng.integers(0, lifted.vertices.shape[0], size=(50, 2))
        ref_d = np.linalg.norm(lifted.vertices[pairs[:, 0]] - lifted.vertices[pairs[:, 1]], axis=1)
        for _ in range(100):
            while True:
                p, y = rng.uniform(-80, 80, 2)
                if math.hypot(p, y) <= 80.0:
                    break
            tgt_pose = Pose(head_rotation(Angles.from_degrees(p, y)),
                            np.array([0.0, 0.0, 300.0]))
            moved = retarget(lifted, src_pose, tgt_pose)
            emitted = moved.gaze_target - face_center_camera(tgt_pose, model)
            oracle = tgt_pose.R @ src_pose.R.T @ gaze_dir
            worst_angle = max(worst_angle, angular_error_deg(emitted, oracle))
            d = np.linalg.norm(moved.vertices[pairs[:, 0]] - moved.vertices[pairs[:, 1]], axis=1)
            worst_dist = max(worst_dist, float(np.abs(d - ref_d).max()))
            n_pairs += 1
    ok = worst_angle < 1e-6 and worst_dist < 1e-9
    report(
        "criterion 3 (gaze-label preservation)",
        ok,
        f"{n_pairs} pose pairs, max gaze angle {worst_angle:.2e} deg (< 1e-6), "
        f"max pair-dist drift {worst_dist:.2e} mm (< 1e-9)",
    )


def test_criterion_4_protocol_conformance(protocol_runs):
    out = protocol_runs["dir"] / "run_a"
    summary = protocol_runs["summaries"][0]
    labels = read_labels(out / "labels.jsonl")
    kinds = [r.bg_kind for r in labels]
    weak = [r.ambient for r in labels if r.ambient < 1.0]
    norms = [math.hypot(math.degrees(r.head_pitch), math.degrees(r.head_yaw)) for r in labels]
    size_ok = True
    twins_ok = True
    for r in labels:
        img = read_image(out / r.file)
        size_ok &= img.shape == (448, 448, 3)
        twin = out / r.file.replace(".png", "_224.png")
        twins_ok &= twin.exists() and read_image(twin).shape == (224, 224, 3)
    ok = (
        summary.sources_admitted == 20
        and len(labels) == 320
        and (kinds.count("black"), kinds.count("solid_color"), kinds.count("scene")) == (64, 64, 192)
        and len(weak) == 160
        and all(0.25 <= a <= 0.75 for a in weak)
        and max(norms) <= 80.0
        and size_ok
        and twins_ok
    )
    report(
        "criterion 4 (protocol conformance)",
        ok,
        f"records {len(labels)}/320, bg {kinds.count('black')}:{kinds.count('solid_color')}:"
        f"{kinds.count('scene')} (want 64:64:192), weak {len(weak)}/160, "
        f"max head norm {max(norms):.2f} deg, sizes ok={size_ok}, twins ok={twins_ok}",
    )


def test_criterion_5_normalization_invariants(protocol_runs):
    cfg = protocol_runs["config"]
    jobs, _, model = plan_run(cfg)
    cam = cfg.normalized_camera()
    worst_center = worst_px = worst_orth = 0.0
    n = 0
    for job in jobs:
        for pj in job.poses:
            tgt = Pose(pj.R, pj.t)
            center = face_center_camera(tgt, model)
            M = normalization_rotation(center, tgt.R)
            worst_orth = max(
                worst_orth,
                float(np.abs(M @ M.T - np.eye(3)).max()),
                abs(float(np.linalg.det(M)) - 1.0),
            )
            t_e = np.array([0.0, 0.0, cam.face_distance_mm]) - M @ center
            placed_center = M @ center + t_e
            worst_center = max(
                worst_center,
                float(np.linalg.norm(placed_center - [0.0, 0.0, cam.face_distance_mm])),
            )
            uv = project_point(cam.intrinsics, placed_center)
            worst_px = max(worst_px, float(np.abs(uv - [224.0, 224.0]).max()))
            n += 1
    ok = worst_center < 1e-6 and worst_px < 1e-6 and worst_orth < 1e-9 and n == 320
    report(
        "criterion 5 (normalization invariants)",
        ok,
        f"{n} samples, max center offset {worst_center:.2e} mm (< 1e-6), "
        f"max projected offset {worst_px:.2e} px (< 1e-6), "
        f"max orthonormality dev {worst_orth:.2e} (< 1e-9)",
    )


def _tree_hash(out_dir):
    digest = hashlib.sha256()
    for png in sorted(out_dir.rglob("*.png")):
        digest.update(png.relative_to(out_dir).as_posix().encode())
        digest.update(png.read_bytes())
    return digest.hexdigest()


def test_criterion_6_determinism(protocol_runs):
    td = protocol_runs["dir"]
    la = (td / "run_a" / "labels.jsonl").read_bytes()
    lb = (td / "run_b" / "labels.jsonl").read_bytes()
    lc = (td / "run_c" / "labels.jsonl").read_bytes()
    ha, hb, hc = (_tree_hash(td / r) for r in ("run_a", "run_b", "run_c"))
    ok = la == lb == lc and ha == hb == hc
    report(
        "criterion 6 (determinism)",
        ok,
        f"labels identical: {la == lb == lc}; png trees {ha[:10]}/{hb[:10]}/{hc[:10]} "
        f"(serial rerun and 8-worker run)",
    )


def test_criterion_7_augmentation_semantics(protocol_runs):
    from gazesynth.pipeline import run_augment
    from gazesynth.render import face_mask_from_landmarks

    td = protocol_runs["dir"]
    out = td / "run_a"
    src = read_labels(out / "labels.jsonl")[:12]
    labels_small = td / "aug_src.jsonl"
    labels_small.write_text("".join(r.to_json() + "\n" for r in src))

    flip1 = td / "aug_flip1"
    run_augment(labels_small, out, flip1, "flip")
    flip2 = td / "aug_flip2"
    run_augment(flip1 / "labels.jsonl", flip1, flip2, "flip")
    once = read_labels(flip1 / "labels.jsonl")
    twice = read_labels(flip2 / "labels.jsonl")
    yaw_ok = all(b.gaze_yaw == -a.gaze_yaw and b.head_yaw == -a.head_yaw
                 for a, b in zip(src, once))
    invol_ok = all(
        b.gaze_yaw == a.gaze_yaw and b.gaze_pitch == a.gaze_pitch for a, b in zip(src, twice)
    ) and all(
        np.array_equal(read_image(flip2 / b.file), read_image(out / a.file))
        for a, b in zip(src, twice)
    )

    pts = [[224.0, 80.0], [360.0, 224.0], [224.0, 368.0], [88.0, 224.0]]
    lm_path = td / "aug_landmarks.jsonl"
    lm_path.write_text("".join(
        json.dumps({"file": r.file, "landmarks": pts}) + "\n" for r in src
    ))
    bg_out = td / "aug_bg"
    run_augment(labels_small, out, bg_out, "bg", seed=9,
                scene_dir=protocol_runs["scenes"], landmarks_path=lm_path)
    mask = face_mask_from_landmarks(np.asarray(pts), (448, 448)).mask
    bg_ok = all(
        np.array_equal(read_image(bg_out / r.file)[mask], read_image(out / r.file)[mask])
        for r in read_labels(bg_out / "labels.jsonl")
    )
    ok = yaw_ok and invol_ok and bg_ok
    report(
        "criterion 7 (augmentation semantics)",
        ok,
        f"yaw negation exact: {yaw_ok}, flip involution exact: {invol_ok}, "
        f"in-mask pixels bit-identical: {bg_ok}",
    )


def test_criterion_8_renderer_micro_oracles():
    cam = CameraIntrinsics(fx=960.0, fy=960.0, cx=224.0, cy=224.0, width=448, height=448)
    lm = {i: 0 for i in CORNER_LANDMARKS}

    # (a) closed-form interpolation: constant-depth triangle, ramp texture
    z = 300.0
    verts = np.array([(-60.0, 60.0, z), (60.0, 60.0, z), (0.0, -60.0, z)])
    tex_coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]])
    ramp = np.zeros((256, 256, 3), dtype=np.uint8)
    ramp[:, :, 0] = np.arange(256, dtype=np.uint8)[None, :]
    ramp[:, :, 1] = np.arange(256, dtype=np.uint8)[:, None]
    ramp[:, :, 2] = 128
    mesh = CameraMesh(verts, np.array([[0, 1, 2]]), tex_coords, lm, np.zeros(3))
    fb = rasterize(mesh, ramp, cam, RenderConfig())

    px = cam.fx * verts[:, 0] / verts[:, 2] + cam.cx
    py = cam.fy * verts[:, 1] / verts[:, 2] + cam.cy
    worst_interp = 0.0
    checked = 0
    for (x, y) in ((224, 224), (200, 300), (250, 310), (224, 180)):
        if not fb.coverage[y, x]:
            continue
        sx, sy = x + 0.5, y + 0.5
        # independent barycentric solve (constant z makes it affine)
        A = np.array(
            [[px[0], px[1], px[2]], [py[0], py[1], py[2]], [1.0, 1.0, 1.0]]
        )
        lam = np.linalg.solve(A, np.array([sx, sy, 1.0]))
        uv = lam @ tex_coords
        expected = np.array([uv[0] * 255.0, uv[1] * 255.0, 128.0])
        got = fb.color[y, x, :3].astype(np.float64)
        worst_interp = max(worst_interp, float(np.abs(got - expected).max()))
        checked += 1
    interp_ok = checked >= 3 and worst_interp <= 1.0

    # (b) z-buffer winner equals the per-triangle nearer depth, plane-crossing case
    flat = np.array([(-80.0, 80.0, 300.0), (80.0, 80.0, 300.0), (0.0, -80.0, 300.0)])
    tilted = np.array([(-80.0, 60.0, 250.0), (80.0, 60.0, 350.0), (0.0, -60.0, 300.0)])
    tex_a = np.full((2, 2, 3), (255, 0, 0), dtype=np.uint8)
    tex_b = np.full((2, 2, 3), (0, 0, 255), dtype=np.uint8)
    mesh_a = CameraMesh(flat, np.array([[0, 1, 2]]), np.full((3, 2), 0.5), lm, np.zeros(3))
    mesh_b = CameraMesh(tilted, np.array([[0, 1, 2]]), np.full((3, 2), 0.5), lm, np.zeros(3))
    fb_a = rasterize(mesh_a, tex_a, cam, RenderConfig())
    fb_b = rasterize(mesh_b, tex_b, cam, RenderConfig())
    both = CameraMesh(
        np.vstack([flat, tilted]), np.array([[0, 1, 2], [3, 4, 5]]),
        np.vstack([np.zeros((3, 2)), np.ones((3, 2))]), lm, np.zeros(3),
    )
    tex_ab = np.zeros((2, 2, 3), dtype=np.uint8)
    tex_ab[0, 0] = (255, 0, 0)   # sampled exactly by tex coord 0
    tex_ab[1, 1] = (0, 0, 255)   # sampled exactly by tex coord 1
    fb_ab = rasterize(both, tex_ab, cam, RenderConfig())
    overlap = fb_a.coverage & fb_b.coverage
    gap = np.where(overlap, np.abs(np.where(overlap, fb_a.depth, 0.0)
                                   - np.where(overlap, fb_b.depth, 0.0)), 0.0)
    test_px = overlap & (gap > 1.0)  # stay away from the crossing line
    a_wins = fb_a.depth < fb_b.depth
    expect_red = test_px & a_wins
    expect_blue = test_px & ~a_wins
    z_ok = bool(
        (fb_ab.color[expect_red][:, 0] == 255).all()
        and (fb_ab.color[expect_blue][:, 2] == 255).all()
        and test_px.sum() > 500
    )
    # the tilted plane's rasterized depth matches ray-plane intersection
    n_vec = np.cross(tilted[1] - tilted[0], tilted[2] - tilted[0])
    d0 = float(n_vec @ tilted[0])
    ys, xs = np.nonzero(fb_b.coverage)
    pick = slice(0, len(xs), max(1, len(xs) // 50))
    worst_plane = 0.0
    for x, y in zip(xs[pick], ys[pick]):
        ray = np.array([(x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0])
        z_true = d0 / float(n_vec @ ray)
        worst_plane = max(worst_plane, abs(z_true - fb_b.depth[y, x]))
    z_ok = z_ok and worst_plane < 1e-6

    # (c) ambient linearity within one 8-bit unit
    rng = np.random.default_rng(3)
    tex_r = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
    mesh_r = CameraMesh(verts, np.array([[0, 1, 2]]), rng.uniform(0, 1, (3, 2)), lm, np.zeros(3))
    full = rasterize(mesh_r, tex_r, cam, RenderConfig(ambient=1.0))
    amb_ok = True
    for a in (0.25, 0.5, 0.75):
        part = rasterize(mesh_r, tex_r, cam, RenderConfig(ambient=a))
        scaled = np.floor(full.color[:, :, :3].astype(np.float64) * a + 0.5)
        amb_ok &= bool(
            np.abs(part.color[:, :, :3].astype(np.float64) - scaled)[full.coverage].max() <= 1.0
        )

    ok = interp_ok and z_ok and amb_ok
    report(
        "criterion 8 (renderer micro-oracles)",
        ok,
        f"interp err {worst_interp:.3f}/255 over {checked} px, z-buffer ok={z_ok} "
        f"(plane depth err {worst_plane:.2e} mm), ambient linearity ok={amb_ok}",
    )


def test_criterion_9_throughput(protocol_runs):
    elapsed = protocol_runs["elapsed_a"]
    ok = elapsed < 120.0
    report(
        "criterion 9 (desk-scale throughput)",
        ok,
        f"320-image 448px single-worker run took {elapsed:.1f}s (soft budget 120s)",
    )


def test_criterion_10_distribution_conformance(protocol_runs):
    from gazesynth.pipeline import load_pose_pool

    labels = read_labels(protocol_runs["dir"] / "run_a" / "labels.jsonl")
    pool = load_pose_pool(protocol_runs["pool_csv"])
    dist = head_pose_support_distance(labels, pool)
    ok = dist <= 1e-6
    report(
        "criterion 10 (distribution conformance)",
        ok,
        f"max distance from emitted head pose to pool support {dist:.2e} deg (<= 1e-6)",
    )
