"""Dataset ingestion and emission: manifests, OBJ meshes, PNGs, labels.

File contracts:

* Manifests and labels are JSONL, one object per line, angles in radians.
* Meshes are OBJ with v = (u, v, d) patch pixels, vt = patch-normalized
  texture coordinates, f = 1-based triangles, plus a sidecar JSON
  ``<mesh>.landmarks.json`` mapping iBUG landmark ids to vertex indices.
* PNGs are written with fixed encoder settings so identical pixels give
  identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    ManifestParseError,
    ManifestSchemaError,
    MeshIntegrityError,
    MissingLandmarksError,
)
from .geometry import Angles, CameraIntrinsics, CropSpec
from .matching import PatchMesh

PNG_COMPRESS_LEVEL = 6

MANIFEST_INTRINSICS_FIELDS = ("fx", "fy", "cx", "cy", "width", "height")
MANIFEST_CROP_FIELDS = ("center_x", "center_y", "box_w", "box_h", "scale_x", "scale_y")


@dataclass(frozen=True)
class SampleManifestEntry:
    """One reconstruction source: image, mesh, landmarks, camera, crop, target."""

    sample_id: str
    image_path: Path
    mesh_path: Path
    landmarks: dict[int, tuple[float, float]]
    intrinsics: CameraIntrinsics
    crop: CropSpec
    gaze_target_mm: np.ndarray
    line: int = 0


def _require(obj: dict, key: str, line: int):
    if key not in obj:
        raise ManifestSchemaError(key, line)
    return obj[key]


def _parse_landmarks(raw, line: int, base: Path) -> dict[int, tuple[float, float]]:
    if isinstance(raw, str):
        path = (base / raw) if not Path(raw).is_absolute() else Path(raw)
        if not path.exists():
            raise ManifestSchemaError("landmarks", line, f"file {path} not found")
        raw = json.loads(path.read_text())
    if isinstance(raw, dict):
        out = {}
        for k, v in raw.items():
            try:
                out[int(k)] = (float(v[0]), float(v[1]))
            except (TypeError, ValueError, IndexError):
                raise ManifestSchemaError("landmarks", line, f"bad entry {k!r}: {v!r}")
        return out
    if isinstance(raw, list):
        if len(raw) != 68:
            raise ManifestSchemaError("landmarks", line, f"expected 68 points, got {len(raw)}")
        return {i: (float(p[0]), float(p[1])) for i, p in enumerate(raw)}
    raise ManifestSchemaError("landmarks", line, f"unsupported type {type(raw).__name__}")


def parse_manifest_line(text: str, line: int, base: Path) -> SampleManifestEntry:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ManifestParseError(str(e), line)
    if not isinstance(obj, dict):
        raise ManifestParseError("manifest line is not a JSON object", line)

    sample_id = str(_require(obj, "sample_id", line))
    image_path = base / str(_require(obj, "image_path", line))
    mesh_path = base / str(_require(obj, "mesh_path", line))
    for p, name in ((image_path, "image_path"), (mesh_path, "mesh_path")):
        if not p.exists():
            raise ManifestSchemaError(name, line, f"path {p} not resolvable")

    intr = _require(obj, "intrinsics", line)
    for f_name in MANIFEST_INTRINSICS_FIELDS:
        if f_name not in intr:
            raise ManifestSchemaError(f"intrinsics.{f_name}", line)
    crop = _require(obj, "crop", line)
    for f_name in MANIFEST_CROP_FIELDS:
        if f_name not in crop:
            raise ManifestSchemaError(f"crop.{f_name}", line)
    target = _require(obj, "gaze_target_mm", line)
    if not (isinstance(target, list) and len(target) == 3):
        raise ManifestSchemaError("gaze_target_mm", line, "expected [x, y, z]")
    target = np.asarray([float(v) for v in target])
    if not np.all(np.isfinite(target)):
        raise ManifestSchemaError("gaze_target_mm", line, "non-finite")

    return SampleManifestEntry(
        sample_id=sample_id,
        image_path=image_path,
        mesh_path=mesh_path,
        landmarks=_parse_landmarks(_require(obj, "landmarks", line), line, base),
        intrinsics=CameraIntrinsics(**{k: intr[k] for k in MANIFEST_INTRINSICS_FIELDS}),
        crop=CropSpec(**{k: float(crop[k]) for k in MANIFEST_CROP_FIELDS}),
        gaze_target_mm=target,
        line=line,
    )


def read_manifest(path: str | Path) -> list[SampleManifestEntry]:
    """Parse a JSONL manifest; errors carry 1-based line numbers."""
    path = Path(path)
    base = path.parent
    entries = []
    with open(path) as fh:
        for i, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            entries.append(parse_manifest_line(raw, i, base))
    return entries


def manifest_entry_to_json(entry: SampleManifestEntry, base: Path | None = None) -> str:
    """Serialize an entry back to one manifest line (paths relative to base)."""

    def rel(p: Path) -> str:
        if base is not None:
            try:
                return str(p.relative_to(base))
            except ValueError:
                pass
        return str(p)

    c = entry.intrinsics
    obj = {
        "sample_id": entry.sample_id,
        "image_path": rel(entry.image_path),
        "mesh_path": rel(entry.mesh_path),
        "landmarks": {str(k): [v[0], v[1]] for k, v in sorted(entry.landmarks.items())},
        "intrinsics": {"fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
                       "width": c.width, "height": c.height},
        "crop": {k: getattr(entry.crop, k) for k in MANIFEST_CROP_FIELDS},
        "gaze_target_mm": [float(v) for v in entry.gaze_target_mm],
    }
    return json.dumps(obj)


# -- OBJ meshes ------------------------------------------------------------

def read_mesh(path: str | Path) -> PatchMesh:
    """Load a patch-space OBJ plus its landmark sidecar."""
    path = Path(path)
    verts, tex, faces = [], [], []
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            tokens = raw.split()
            if not tokens or tokens[0] == "#":
                continue
            kind = tokens[0]
            try:
                if kind == "v":
                    verts.append([float(tokens[1]), float(tokens[2]), float(tokens[3])])
                elif kind == "vt":
                    tex.append([float(tokens[1]), float(tokens[2])])
                elif kind == "f":
                    idx = []
                    for tok in tokens[1:4]:
                        vi = int(tok.split("/")[0])
                        if vi <= 0:
                            raise MeshIntegrityError(
                                f"{path}:{ln}: OBJ face indices are 1-based, got {vi}"
                            )
                        idx.append(vi - 1)
                    faces.append(idx)
            except (ValueError, IndexError):
                raise MeshIntegrityError(f"{path}:{ln}: malformed {kind!r} line")
    if not verts:
        raise MeshIntegrityError(f"{path}: no vertices")
    if len(tex) != len(verts):
        raise MeshIntegrityError(
            f"{path}: expected one vt per vertex, got {len(tex)} vt for {len(verts)} v"
        )
    faces_arr = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if faces_arr.size and faces_arr.max() >= len(verts):
        raise MeshIntegrityError(f"{path}: face index {faces_arr.max() + 1} out of range")

    sidecar = Path(str(path) + ".landmarks.json")
    if not sidecar.exists():
        raise MissingLandmarksError(f"missing landmark sidecar {sidecar}")
    raw_map = json.loads(sidecar.read_text())
    landmark_map = {int(k): int(v) for k, v in raw_map.items()}
    bad = [v for v in landmark_map.values() if not (0 <= v < len(verts))]
    if bad:
        raise MeshIntegrityError(f"{sidecar}: vertex indices {bad} out of range")

    return PatchMesh(
        vertices=np.asarray(verts, dtype=np.float64),
        triangles=faces_arr,
        tex_coords=np.asarray(tex, dtype=np.float64),
        landmark_map=landmark_map,
    )


def write_mesh(mesh: PatchMesh, path: str | Path) -> None:
    """Write an OBJ (coordinates at 6 decimals) plus the landmark sidecar."""
    path = Path(path)
    lines = ["# patch-space face mesh: v lines are (u, v, d) in patch pixels"]
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}")
    for t in mesh.tex_coords:
        lines.append(f"vt {t[0]:.6f} {t[1]:.6f}")
    for f in mesh.triangles:
        lines.append(f"f {f[0] + 1}/{f[0] + 1} {f[1] + 1}/{f[1] + 1} {f[2] + 1}/{f[2] + 1}")
    path.write_text("\n".join(lines) + "\n")
    sidecar = Path(str(path) + ".landmarks.json")
    sidecar.write_text(json.dumps({str(k): int(v) for k, v in sorted(mesh.landmark_map.items())}))


# -- images ----------------------------------------------------------------

def write_png(image: np.ndarray, path: str | Path) -> None:
    """Deterministic PNG write (fixed compression, no ancillary chunks)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(image)).save(
        path, format="PNG", compress_level=PNG_COMPRESS_LEVEL
    )


def read_image(path: str | Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


# -- samples and labels ------------------------------------------------------

@dataclass(frozen=True)
class SampleRecord:
    """One synthesized output before it is written to disk."""

    image: np.ndarray
    gaze: Angles
    head: Angles
    bg_kind: str
    ambient: float
    source_sample_id: str
    pose_index: int
    seed_trace: str
    image_224: np.ndarray | None = None


@dataclass(frozen=True)
class LabelRecord:
    file: str
    gaze_pitch: float
    gaze_yaw: float
    head_pitch: float
    head_yaw: float
    bg_kind: str
    ambient: float
    source_sample_id: str
    pose_index: int
    seed_trace: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "file": self.file,
                "gaze_pitch": self.gaze_pitch,
                "gaze_yaw": self.gaze_yaw,
                "head_pitch": self.head_pitch,
                "head_yaw": self.head_yaw,
                "bg_kind": self.bg_kind,
                "ambient": self.ambient,
                "source_sample_id": self.source_sample_id,
                "pose_index": self.pose_index,
                "seed_trace": self.seed_trace,
            }
        )

    @staticmethod
    def from_json(text: str) -> "LabelRecord":
        obj = json.loads(text)
        return LabelRecord(
            file=obj["file"],
            gaze_pitch=float(obj["gaze_pitch"]),
            gaze_yaw=float(obj["gaze_yaw"]),
            head_pitch=float(obj["head_pitch"]),
            head_yaw=float(obj["head_yaw"]),
            bg_kind=obj["bg_kind"],
            ambient=float(obj["ambient"]),
            source_sample_id=obj["source_sample_id"],
            pose_index=int(obj["pose_index"]),
            seed_trace=obj["seed_trace"],
        )


def write_sample(record: SampleRecord, out_dir: str | Path) -> LabelRecord:
    """Write the sample's PNG(s) under ``<source_sample_id>/<pose_index>.png``.

    Returns the label row; appending rows to labels.jsonl is the caller's
    job so a run has a single serialized label writer.
    """
    out_dir = Path(out_dir)
    rel = Path(record.source_sample_id) / f"{record.pose_index}.png"
    write_png(record.image, out_dir / rel)
    if record.image_224 is not None:
        rel224 = Path(record.source_sample_id) / f"{record.pose_index}_224.png"
        write_png(record.image_224, out_dir / rel224)
    return LabelRecord(
        file=str(rel),
        gaze_pitch=record.gaze.pitch,
        gaze_yaw=record.gaze.yaw,
        head_pitch=record.head.pitch,
        head_yaw=record.head.yaw,
        bg_kind=record.bg_kind,
        ambient=record.ambient,
        source_sample_id=record.source_sample_id,
        pose_index=record.pose_index,
        seed_trace=record.seed_trace,
    )


def append_labels(records, path: str | Path) -> int:
    """Append label rows to a JSONL file; returns the number written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "a") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
            n += 1
    return n


def read_labels(path: str | Path) -> list[LabelRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(LabelRecord.from_json(line))
    return out
