"""Deterministic software rasterizer and the image-level augmentation ops.

Rasterization rules (fixed so output is byte-stable):

* pixel (x, y) is sampled at its center (x + 0.5, y + 0.5);
* coverage uses the top-left fill rule on edge functions;
* depth is the perspective-correct interpolated camera z, nearest wins,
  ties broken in favor of the lower triangle index;
* texture lookup is bilinear with clamp-to-edge, texture coordinate u in
  [0, 1] maps to texel column u * (width - 1);
* color quantization rounds half away from zero.

Lighting is a single ambient scalar multiplying the sampled texture color.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .errors import (
    DegenerateMaskError,
    EmptyRenderError,
    InvalidIntrinsicsError,
    SceneNotFoundError,
)
from .geometry import Angles, CameraIntrinsics
from .seeding import derive_subseed

SCENE_BLUR_SIGMA_PX = 3.0


@dataclass(frozen=True)
class BackgroundSpec:
    """Background behind the rendered face: black, one color, or a scene."""

    kind: str
    color: tuple[int, int, int] | None = None
    scene_id: int | None = None

    def __post_init__(self):
        if self.kind not in ("black", "solid_color", "scene"):
            raise ValueError(f"unknown background kind {self.kind!r}")
        if self.kind == "solid_color" and (self.color is None or len(self.color) != 3):
            raise ValueError("solid_color background needs an RGB color")
        if self.kind == "scene" and self.scene_id is None:
            raise ValueError("scene background needs a scene_id")


@dataclass(frozen=True)
class RenderConfig:
    out_size: int = 448
    ambient: float = 1.0
    background: BackgroundSpec = BackgroundSpec("black")
    emit_depth: bool = False

    def __post_init__(self):
        if self.out_size <= 0:
            raise ValueError("out_size must be positive")
        if not (0.0 < self.ambient <= 1.0):
            raise ValueError(f"ambient must be in (0, 1], got {self.ambient}")


@dataclass
class Framebuffer:
    """Raster output: RGBA8 color, per-pixel depth (mm, +inf off-face), coverage."""

    color: np.ndarray
    depth: np.ndarray
    coverage: np.ndarray
    degenerate_triangles: int = 0


@dataclass(frozen=True)
class FaceMask:
    mask: np.ndarray  # bool (h, w)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def _sample_bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Clamp-to-edge bilinear sample of an (h, w, c) image at float coords."""
    h, w = img.shape[:2]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    im = img.astype(np.float64)
    top = im[y0, x0] * (1 - fx) + im[y0, x1] * fx
    bot = im[y1, x0] * (1 - fx) + im[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _edge_accept(e: np.ndarray, ax, ay, bx, by) -> np.ndarray:
    """Coverage test for one edge function with the top-left rule."""
    ey = by - ay
    ex = bx - ax
    top_left = ey < 0 or (ey == 0 and ex > 0)
    return (e > 0) | ((e == 0) & top_left)


def rasterize(
    mesh,
    texture: np.ndarray,
    cam_intrinsics: CameraIntrinsics,
    cfg: RenderConfig,
) -> Framebuffer:
    """Project and scan-convert a camera-space mesh under the given camera.

    texture is an (h, w, 3) uint8 image indexed by the mesh tex_coords.
    All mesh vertices must have z > 0.  Zero-area triangles are skipped and
    counted.  Output is independent of any evaluation order by construction
    (single-threaded scan with a total triangle order).
    """
    tris = np.asarray(mesh.triangles)
    if tris.size == 0:
        raise EmptyRenderError("mesh has no triangles")
    if texture is None or texture.size == 0:
        raise ValueError("empty texture")
    verts = np.asarray(mesh.vertices, dtype=np.float64)
    if np.any(verts[:, 2] <= 0):
        raise EmptyRenderError("mesh vertices behind the camera")

    W = int(cam_intrinsics.width)
    H = int(cam_intrinsics.height)
    z = verts[:, 2]
    px = cam_intrinsics.fx * verts[:, 0] / z + cam_intrinsics.cx
    py = cam_intrinsics.fy * verts[:, 1] / z + cam_intrinsics.cy
    inv_z = 1.0 / z
    tc_over_z = np.asarray(mesh.tex_coords, dtype=np.float64) * inv_z[:, None]

    color = np.zeros((H, W, 3), dtype=np.float64)
    depth = np.full((H, W), np.inf, dtype=np.float64)
    coverage = np.zeros((H, W), dtype=bool)
    tex = np.asarray(texture)
    th, tw = tex.shape[:2]
    degenerate = 0

    for tri in tris:
        i0, i1, i2 = int(tri[0]), int(tri[1]), int(tri[2])
        x0, y0 = px[i0], py[i0]
        x1, y1 = px[i1], py[i1]
        x2, y2 = px[i2], py[i2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            degenerate += 1
            continue
        if area < 0.0:  # normalize winding so edge functions are positive inside
            i1, i2 = i2, i1
            x1, y1, x2, y2 = x2, y2, x1, y1
            area = -area

        xmin = max(int(math.floor(min(x0, x1, x2) - 0.5)), 0)
        xmax = min(int(math.ceil(max(x0, x1, x2) - 0.5)), W - 1)
        ymin = max(int(math.floor(min(y0, y1, y2) - 0.5)), 0)
        ymax = min(int(math.ceil(max(y0, y1, y2) - 0.5)), H - 1)
        if xmin > xmax or ymin > ymax:
            continue

        xs = np.arange(xmin, xmax + 1, dtype=np.float64) + 0.5
        ys = np.arange(ymin, ymax + 1, dtype=np.float64) + 0.5
        gx, gy = np.meshgrid(xs, ys)

        e0 = (x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1)  # opposite vertex 0
        e1 = (x0 - x2) * (gy - y2) - (y0 - y2) * (gx - x2)  # opposite vertex 1
        e2 = (x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0)  # opposite vertex 2
        inside = (
            _edge_accept(e0, x1, y1, x2, y2)
            & _edge_accept(e1, x2, y2, x0, y0)
            & _edge_accept(e2, x0, y0, x1, y1)
        )
        if not np.any(inside):
            continue

        l0 = e0[inside] / area
        l1 = e1[inside] / area
        l2 = e2[inside] / area
        inv_z_p = l0 * inv_z[i0] + l1 * inv_z[i1] + l2 * inv_z[i2]
        z_p = 1.0 / inv_z_p

        rows, cols = np.nonzero(inside)
        rows = rows + ymin
        cols = cols + xmin
        closer = z_p < depth[rows, cols]
        if not np.any(closer):
            continue
        rows, cols = rows[closer], cols[closer]
        l0, l1, l2, z_p, inv_z_p = l0[closer], l1[closer], l2[closer], z_p[closer], inv_z_p[closer]

        tc = (
            l0[:, None] * tc_over_z[i0]
            + l1[:, None] * tc_over_z[i1]
            + l2[:, None] * tc_over_z[i2]
        ) / inv_z_p[:, None]
        texel = _sample_bilinear(tex, tc[:, 0] * (tw - 1), tc[:, 1] * (th - 1))

        depth[rows, cols] = z_p
        color[rows, cols] = texel
        coverage[rows, cols] = True

    rgb = np.clip(_round_half_away(color * cfg.ambient), 0, 255).astype(np.uint8)
    rgba = np.dstack([rgb, np.where(coverage, 255, 0).astype(np.uint8)])
    return Framebuffer(color=rgba, depth=depth, coverage=coverage, degenerate_triangles=degenerate)


class ScenePool:
    """Background scenes: blurred, square-cropped, resized, in filename order."""

    def __init__(self, directory: str | Path, size: int):
        directory = Path(directory)
        paths = sorted(
            p for p in directory.iterdir()
            if p.suffix.lower() in (".png", ".jpg", ".jpeg") and p.is_file()
        )
        if not paths:
            raise SceneNotFoundError(f"no scene images in {directory}")
        self.size = size
        self.paths = paths
        self._images = [self._prepare(p, size) for p in paths]

    @staticmethod
    def _prepare(path: Path, size: int) -> np.ndarray:
        img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
        for c in range(3):
            img[:, :, c] = gaussian_filter(img[:, :, c], SCENE_BLUR_SIGMA_PX, mode="nearest")
        h, w = img.shape[:2]
        side = min(h, w)
        y0 = (h - side) // 2
        x0 = (w - side) // 2
        img = img[y0 : y0 + side, x0 : x0 + side]
        img = np.clip(_round_half_away(img), 0, 255).astype(np.uint8)
        pil = Image.fromarray(img).resize((size, size), Image.BOX)
        return np.asarray(pil)

    def __len__(self) -> int:
        return len(self._images)

    def get(self, scene_id: int) -> np.ndarray:
        if not (0 <= scene_id < len(self._images)):
            raise SceneNotFoundError(f"scene {scene_id} not in pool of {len(self._images)}")
        return self._images[scene_id]


def composite(fb: Framebuffer, bg: BackgroundSpec, scenes: ScenePool | None = None) -> np.ndarray:
    """Fill non-face pixels with the requested background; face pixels pass through."""
    h, w = fb.coverage.shape
    if bg.kind == "black":
        back = np.zeros((h, w, 3), dtype=np.uint8)
    elif bg.kind == "solid_color":
        back = np.empty((h, w, 3), dtype=np.uint8)
        back[:] = np.asarray(bg.color, dtype=np.uint8)
    else:
        if scenes is None:
            raise SceneNotFoundError("scene background requested but no scene pool given")
        back = scenes.get(bg.scene_id)
        if back.shape[:2] != (h, w):
            back = np.asarray(Image.fromarray(back).resize((w, h), Image.BOX))
    return np.where(fb.coverage[:, :, None], fb.color[:, :, :3], back)


def background_schedule(
    n: int,
    seed: int,
    n_scenes: int,
    ratio: tuple[int, int, int] = (1, 1, 3),
    weak_fraction: float = 0.5,
    ambient_range: tuple[float, float] = (0.25, 0.75),
) -> list[tuple[BackgroundSpec, float]]:
    """Exact-count background/lighting assignment for n images.

    Category counts follow floor(n * part / total) for black and color with
    the remainder going to scenes; floor(n * weak_fraction) entries get a
    weak ambient drawn uniformly from ambient_range, the rest 1.0.  The
    category order and the weak-light order are shuffled independently by
    the seed; same seed, same schedule.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return []
    a, b, c = ratio
    if min(a, b, c) < 0 or a + b + c == 0:
        raise ValueError(f"bad background ratio {ratio}")
    total = a + b + c
    if c > 0:
        n_black = n * a // total
        n_color = n * b // total
        n_scene = n - n_black - n_color
    else:
        n_black = n * a // (a + b) if (a + b) else 0
        n_color = n - n_black
        n_scene = 0
    if n_scene > 0 and n_scenes <= 0:
        raise SceneNotFoundError("schedule needs scenes but the pool is empty")

    rng = np.random.Generator(np.random.PCG64(derive_subseed(seed, "background-schedule")))
    kinds = ["black"] * n_black + ["solid_color"] * n_color + ["scene"] * n_scene
    kinds = [kinds[i] for i in rng.permutation(n)]
    n_weak = int(math.floor(n * weak_fraction))
    weak = np.zeros(n, dtype=bool)
    weak[rng.permutation(n)[:n_weak]] = True

    lo, hi = ambient_range
    out = []
    for i, kind in enumerate(kinds):
        if kind == "solid_color":
            spec = BackgroundSpec("solid_color", color=tuple(int(v) for v in rng.integers(0, 256, 3)))
        elif kind == "scene":
            spec = BackgroundSpec("scene", scene_id=int(rng.integers(0, n_scenes)))
        else:
            spec = BackgroundSpec("black")
        ambient = float(rng.uniform(lo, hi)) if weak[i] else 1.0
        out.append((spec, ambient))
    return out


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew monotone chain; returns hull vertices in CCW order (y-down CW)."""
    pts = sorted({(float(x), float(y)) for x, y in points})
    if len(pts) < 3:
        raise DegenerateMaskError("need at least 3 distinct landmark points")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateMaskError("landmarks are collinear")
    return np.asarray(hull, dtype=np.float64)


def _coverage_polygon(hull: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Rasterize a convex polygon with the same top-left rule as triangles."""
    h, w = size
    mask = np.zeros((h, w), dtype=bool)
    anchor = hull[0]
    for k in range(1, len(hull) - 1):
        tri = np.array([anchor, hull[k], hull[k + 1]])
        x0, y0 = tri[0]
        x1, y1 = tri[1]
        x2, y2 = tri[2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0:
            continue
        if area < 0:
            x1, y1, x2, y2 = x2, y2, x1, y1
        xmin = max(int(math.floor(min(x0, x1, x2) - 0.5)), 0)
        xmax = min(int(math.ceil(max(x0, x1, x2) - 0.5)), w - 1)
        ymin = max(int(math.floor(min(y0, y1, y2) - 0.5)), 0)
        ymax = min(int(math.ceil(max(y0, y1, y2) - 0.5)), h - 1)
        if xmin > xmax or ymin > ymax:
            continue
        xs = np.arange(xmin, xmax + 1, dtype=np.float64) + 0.5
        ys = np.arange(ymin, ymax + 1, dtype=np.float64) + 0.5
        gx, gy = np.meshgrid(xs, ys)
        e0 = (x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1)
        e1 = (x0 - x2) * (gy - y2) - (y0 - y2) * (gx - x2)
        e2 = (x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0)
        inside = (
            _edge_accept(e0, x1, y1, x2, y2)
            & _edge_accept(e1, x2, y2, x0, y0)
            & _edge_accept(e2, x0, y0, x1, y1)
        )
        mask[ymin : ymax + 1, xmin : xmax + 1] |= inside
    return mask


def face_mask_from_landmarks(landmarks, size: tuple[int, int]) -> FaceMask:
    """Filled convex hull of the landmark points as a binary (h, w) mask."""
    pts = np.asarray(landmarks, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] < 3:
        raise DegenerateMaskError(f"need >= 3 landmarks, got {pts.shape[0]}")
    hull = _convex_hull(pts)
    return FaceMask(_coverage_polygon(hull, size))


def switch_background(image: np.ndarray, mask: FaceMask, scene: np.ndarray) -> np.ndarray:
    """Replace pixels outside the face mask with the scene image."""
    if image.shape[:2] != mask.mask.shape or image.shape != scene.shape:
        raise ValueError(
            f"dimension mismatch: image {image.shape}, mask {mask.mask.shape}, scene {scene.shape}"
        )
    return np.where(mask.mask[:, :, None], image, scene)


def flip_horizontal(image: np.ndarray, gaze: Angles, head: Angles):
    """Mirror about the vertical axis; yaw labels are negated, pitch kept."""
    flipped = np.ascontiguousarray(image[:, ::-1])
    return flipped, Angles(gaze.pitch, -gaze.yaw), Angles(head.pitch, -head.yaw)


def downscale(image: np.ndarray) -> np.ndarray:
    """2x area-average reduction with round-half-away-from-zero, in integers."""
    h, w = image.shape[:2]
    if h % 2 or w % 2:
        raise ValueError(f"dimensions must be even, got {h}x{w}")
    s = image.astype(np.uint32).reshape(h // 2, 2, w // 2, 2, -1).sum(axis=(1, 3))
    return ((s + 2) // 4).astype(np.uint8)


def warp_homography(image: np.ndarray, H: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    """Inverse-map perspective warp with bilinear sampling, black outside.

    H maps source pixel coordinates to output pixel coordinates; out_size is
    (width, height).
    """
    H = np.asarray(H, dtype=np.float64)
    if abs(np.linalg.det(H)) < 1e-15:
        raise InvalidIntrinsicsError("homography is not invertible")
    Hinv = np.linalg.inv(H)
    w_out, h_out = out_size
    xs, ys = np.meshgrid(np.arange(w_out, dtype=np.float64), np.arange(h_out, dtype=np.float64))
    denom = Hinv[2, 0] * xs + Hinv[2, 1] * ys + Hinv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (Hinv[0, 0] * xs + Hinv[0, 1] * ys + Hinv[0, 2]) / denom
        sy = (Hinv[1, 0] * xs + Hinv[1, 1] * ys + Hinv[1, 2]) / denom
    h_src, w_src = image.shape[:2]
    valid = (
        np.isfinite(sx) & np.isfinite(sy)
        & (sx >= 0) & (sx <= w_src - 1) & (sy >= 0) & (sy <= h_src - 1)
        & (denom > 0)
    )
    img = image if image.ndim == 3 else image[:, :, None]
    out = np.zeros((h_out, w_out, img.shape[2]), dtype=np.float64)
    if np.any(valid):
        sampled = _sample_bilinear(img, np.where(valid, sx, 0.0), np.where(valid, sy, 0.0))
        out[valid] = sampled[valid]
    out = np.clip(_round_half_away(out), 0, 255).astype(np.uint8)
    return out if image.ndim == 3 else out[:, :, 0]
