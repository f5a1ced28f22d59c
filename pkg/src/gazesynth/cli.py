"""Command-line entry points: synthesize, stats, validate, augment, preview,
plus a fixtures generator for self-contained demos and tests.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 run produced
zero images, 5 validation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .dataio import read_labels, read_manifest, write_png
from .errors import ConfigError, GazeSynthError
from .geometry import Angles
from .pipeline import RunConfig, render_preview, run_augment, run_synthesize
from .stats import compute_stats, head_pose_support_distance, render_text, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_ZERO_OUTPUT = 4
EXIT_VALIDATION = 5

_SYNTH_DEFAULTS = {
    "per_image": 16,
    "max_pose_norm_deg": 80.0,
    "frontal_source_max_deg": 15.0,
    "bg_ratio": "1:1:3",
    "weak_light_fraction": 0.5,
    "ambient_min": 0.25,
    "ambient_max": 0.75,
    "seed": 0,
    "workers": 1,
    "emit_224": False,
    "normalized_focal": 960.0,
    "normalized_size": 448,
    "face_distance_mm": 300.0,
}


def _parse_ratio(text: str) -> tuple[int, int, int]:
    parts = text.replace(",", ":").split(":")
    if len(parts) != 3:
        raise ConfigError(f"background ratio must be a:b:c, got {text!r}")
    try:
        a, b, c = (int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"background ratio must be integer a:b:c, got {text!r}")
    return a, b, c


def _build_run_config(args: argparse.Namespace) -> RunConfig:
    merged = dict(_SYNTH_DEFAULTS)
    if args.config:
        try:
            merged.update(json.loads(Path(args.config).read_text()))
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}")
    for key in list(_SYNTH_DEFAULTS) + ["manifest", "pose_pool", "out_dir", "scene_dir",
                                        "reference_model_csv"]:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    for req in ("manifest", "pose_pool", "out_dir"):
        if not merged.get(req):
            raise ConfigError(f"missing required option --{req.replace('_', '-')}")
    scene_dir = merged.get("scene_dir") or os.environ.get("GAZESYNTH_SCENE_DIR")
    ratio = merged["bg_ratio"]
    if isinstance(ratio, str):
        ratio = _parse_ratio(ratio)
    else:
        ratio = tuple(int(v) for v in ratio)
    frontal = merged["frontal_source_max_deg"]
    return RunConfig(
        manifest=Path(merged["manifest"]),
        pose_pool=Path(merged["pose_pool"]),
        out_dir=Path(merged["out_dir"]),
        scene_dir=None if scene_dir in (None, "") else Path(scene_dir),
        per_image=int(merged["per_image"]),
        max_pose_norm_deg=float(merged["max_pose_norm_deg"]),
        frontal_source_max_deg=None if frontal in (None, "none") else float(frontal),
        bg_ratio=ratio,
        weak_light_fraction=float(merged["weak_light_fraction"]),
        ambient_range=(float(merged["ambient_min"]), float(merged["ambient_max"])),
        seed=int(merged["seed"]),
        emit_224=bool(merged["emit_224"]),
        workers=int(merged["workers"]),
        normalized_focal=float(merged["normalized_focal"]),
        normalized_size=int(merged["normalized_size"]),
        face_distance_mm=float(merged["face_distance_mm"]),
        reference_model_csv=(
            Path(merged["reference_model_csv"]) if merged.get("reference_model_csv") else None
        ),
    )


def _cmd_synthesize(args) -> int:
    cfg = _build_run_config(args)
    if not cfg.manifest.exists():
        raise ConfigError(f"manifest {cfg.manifest} not found")
    if not cfg.pose_pool.exists():
        raise ConfigError(f"pose pool {cfg.pose_pool} not found")
    summary = run_synthesize(cfg)
    print(
        f"sources: {summary.sources_admitted} admitted / {summary.sources_rejected} rejected "
        f"of {summary.sources_total}"
    )
    print(f"poses filtered: {summary.poses_filtered}")
    print(f"lambda failures: {summary.lambda_failures}  other failures: {summary.other_failures}")
    print(f"images written: {summary.images_written}")
    if not summary.consistent(cfg.per_image):
        print("warning: summary counts are inconsistent", file=sys.stderr)
    if summary.images_written == 0:
        print("error: run produced zero images", file=sys.stderr)
        return EXIT_ZERO_OUTPUT
    return EXIT_OK


def _cmd_stats(args) -> int:
    records = read_labels(args.labels)
    report = compute_stats(records, bin_width_deg=args.bin_width_deg)
    print(render_text(report))
    if args.csv_prefix:
        for p in write_csv(report, args.csv_prefix):
            print(f"wrote {p}")
    if args.pose_pool:
        from .pipeline import load_pose_pool

        pool = load_pose_pool(args.pose_pool)
        dist = head_pose_support_distance(records, pool)
        ok = dist <= args.support_tol_deg
        print(f"head-pose support distance to pool: {dist:.6f} deg "
              f"({'within' if ok else 'OUTSIDE'} {args.support_tol_deg} deg)")
        if not ok:
            return EXIT_VALIDATION
    return EXIT_OK


def _cmd_validate(args) -> int:
    from .validate import run_all

    results = run_all()
    failed = 0
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.metric}")
        failed += 0 if r.passed else 1
    if failed:
        print(f"{failed} of {len(results)} checks failed", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def _cmd_augment(args) -> int:
    written, skipped = run_augment(
        labels_path=args.labels,
        images_dir=args.images_dir,
        out_dir=args.out_dir,
        mode=args.mode,
        seed=args.seed,
        scene_dir=args.scene_dir or os.environ.get("GAZESYNTH_SCENE_DIR"),
        landmarks_path=args.landmarks,
    )
    print(f"augmented: {written} written, {skipped} skipped")
    if written == 0:
        return EXIT_ZERO_OUTPUT
    return EXIT_OK


def _parse_pose_list(text: str) -> list[Angles]:
    poses = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        p, y = part.split(",")
        poses.append(Angles.from_degrees(float(p), float(y)))
    if not poses:
        raise ConfigError("empty pose list")
    return poses


def _cmd_preview(args) -> int:
    entries = read_manifest(args.manifest)
    if not (0 <= args.index < len(entries)):
        raise ConfigError(f"sample index {args.index} out of range (manifest has {len(entries)})")
    if args.poses:
        poses = _parse_pose_list(args.poses)
    else:
        from .pipeline import load_pose_pool

        pool = load_pose_pool(args.pose_pool)
        poses = [pool.angles(i) for i in range(len(pool))]
    cfg = RunConfig(
        manifest=Path(args.manifest), pose_pool=Path("unused"), out_dir=Path("unused"),
    )
    grid = render_preview(entries[args.index], poses, cfg)
    write_png(grid, args.out)
    print(f"wrote {args.out} ({len(poses)} cells)")
    return EXIT_OK


def _cmd_fixtures(args) -> int:
    from .fixtures import write_fixture_set

    manifest = write_fixture_set(
        args.out_dir,
        count=args.count,
        seed=args.seed,
        subdivision=args.subdivision,
        max_rot_deg=args.max_rot_deg,
    )
    print(f"wrote {manifest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazesynth",
        description="Synthesize normalized, gaze-labeled face images from 3D reconstructions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="run the full synthesis pipeline")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--manifest", help="source manifest JSONL")
    p.add_argument("--pose-pool", dest="pose_pool", help="target pose pool (CSV or labels JSONL)")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--scene-dir", dest="scene_dir",
                   help="scene image directory (default: $GAZESYNTH_SCENE_DIR)")
    p.add_argument("--per-image", dest="per_image", type=int)
    p.add_argument("--max-pose-norm-deg", dest="max_pose_norm_deg", type=float)
    p.add_argument("--frontal-source-max-deg", dest="frontal_source_max_deg",
                   help="degrees, or 'none' to disable the source filter")
    p.add_argument("--bg-ratio", dest="bg_ratio", help="black:color:scene, e.g. 1:1:3")
    p.add_argument("--weak-light-fraction", dest="weak_light_fraction", type=float)
    p.add_argument("--ambient-min", dest="ambient_min", type=float)
    p.add_argument("--ambient-max", dest="ambient_max", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--emit-224", dest="emit_224", action="store_const", const=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--normalized-focal", dest="normalized_focal", type=float)
    p.add_argument("--normalized-size", dest="normalized_size", type=int)
    p.add_argument("--face-distance-mm", dest="face_distance_mm", type=float)
    p.add_argument("--reference-model-csv", dest="reference_model_csv")
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("stats", help="histograms over a labels.jsonl")
    p.add_argument("labels")
    p.add_argument("--bin-width-deg", dest="bin_width_deg", type=float, default=5.0)
    p.add_argument("--csv-prefix", dest="csv_prefix")
    p.add_argument("--pose-pool", dest="pose_pool",
                   help="check emitted head poses lie in this pool's support")
    p.add_argument("--support-tol-deg", dest="support_tol_deg", type=float, default=1e-3)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("validate", help="run the self-check suite")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("augment", help="flip or background-switch an emitted set")
    p.add_argument("--labels", required=True)
    p.add_argument("--images-dir", dest="images_dir", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--mode", choices=("flip", "bg"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scene-dir", dest="scene_dir")
    p.add_argument("--landmarks", help="JSONL of per-file landmarks (bg mode)")
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("preview", help="montage of one sample over several poses")
    p.add_argument("--manifest", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--poses", help="inline 'pitch,yaw;pitch,yaw;...' in degrees")
    p.add_argument("--pose-pool", dest="pose_pool", help="pool file to take poses from")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_preview)

    p = sub.add_parser("fixtures", help="generate a synthetic, ready-to-run dataset")
    fsub = p.add_subparsers(dest="fixtures_command", required=True)
    g = fsub.add_parser("generate", help="write meshes, images and a manifest")
    g.add_argument("--out-dir", dest="out_dir", required=True)
    g.add_argument("--count", type=int, default=4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--subdivision", type=int, default=1)
    g.add_argument("--max-rot-deg", dest="max_rot_deg", type=float, default=8.0)
    g.set_defaults(func=_cmd_fixtures)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except GazeSynthError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
