#!/usr/bin/env python3
"""End-to-end demo on purely synthetic inputs.

Generates fixture faces and scene images, runs the full synthesis pipeline,
prints distribution stats and writes a preview montage.  Everything lands in
./demo_output (override with --out).
"""

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from gazesynth.cli import main as cli


def make_scenes(scene_dir: Path, n: int = 4, seed: int = 0) -> None:
    scene_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        # smooth colored gradients stand in for real photographs
        h, w = 240, 320
        ys, xs = np.mgrid[0:h, 0:w]
        img = np.stack(
            [
                128 + 120 * np.sin(xs / w * (1 + i) * 3.1),
                128 + 120 * np.cos(ys / h * (2 + i) * 2.3),
                rng.integers(30, 220) * np.ones((h, w)),
            ],
            axis=2,
        ).clip(0, 255).astype(np.uint8)
        Image.fromarray(img, "RGB").save(scene_dir / f"scene{i}.png")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_output")
    ap.add_argument("--sources", type=int, default=4)
    ap.add_argument("--per-image", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenes = out / "scenes"
    make_scenes(scenes, seed=args.seed)

    rc = cli(["fixtures", "generate", "--out-dir", str(out / "sources"),
              "--count", str(args.sources), "--seed", str(args.seed),
              "--subdivision", "1"])
    if rc != 0:
        return rc

    pool = out / "pose_pool.csv"
    rng = np.random.default_rng(args.seed + 1)
    rows = ["pitch_deg,yaw_deg"]
    while len(rows) < 41:
        p, y = rng.uniform(-75, 75, 2)
        if np.hypot(p, y) <= 78.0:
            rows.append(f"{p:.2f},{y:.2f}")
    pool.write_text("\n".join(rows) + "\n")

    rc = cli(["synthesize",
              "--manifest", str(out / "sources" / "manifest.jsonl"),
              "--pose-pool", str(pool),
              "--out-dir", str(out / "dataset"),
              "--scene-dir", str(scenes),
              "--per-image", str(args.per_image),
              "--seed", str(args.seed),
              "--workers", str(args.workers),
              "--emit-224"])
    if rc != 0:
        return rc

    rc = cli(["stats", str(out / "dataset" / "labels.jsonl"),
              "--pose-pool", str(pool),
              "--csv-prefix", str(out / "hist")])
    if rc != 0:
        return rc

    return cli(["preview", "--manifest", str(out / "sources" / "manifest.jsonl"),
                "--index", "0",
                "--poses=0,0;-25,-35;25,35;-40,20;40,-20;0,60;0,-60;55,0;-55,0",
                "--out", str(out / "preview.png")])


if __name__ == "__main__":
    sys.exit(main())
