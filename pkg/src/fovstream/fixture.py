"""Synthetic RGB-D fixture scenes: raycast spheres and boxes over a back wall.

Generates a small labeled dataset (color, 16-bit depth, instance masks,
intrinsics, gaze sweep trace) so benchmarks and tests run without any
external download.  Geometry is analytic, so expected pixel counts and
projections can be derived independently of the loader under test.

Conventions: camera at the origin looking down +z, x right, y down (image
coordinates).  Depth images store z in millimeters; 0 marks invalid pixels
(here, a window-like hole in the back wall).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .ingest import (
    COLOR_DIR,
    DEPTH_DIR,
    FRAME_PATTERN,
    INTRINSICS_FILE,
    MASK_DIR,
    CameraIntrinsics,
)

DEFAULT_WIDTH = 320
DEFAULT_HEIGHT = 240
DEFAULT_FOCAL = 160.0  # 90 degree horizontal field of view at 320 px
DEFAULT_FRAMES = 24
DEPTH_SCALE = 0.001

WALL_Z = 3.6
FLOOR_Y = 0.95
NEAR_CLIP = 0.1
# window-like hole in the wall; rays through it hit nothing (depth 0)
HOLE_X = (1.05, 1.85)
HOLE_Y = (-1.35, -0.55)

GAZE_TRACE_FILE = "gaze_sweep.csv"
TRACE_SECONDS = 12.0
TRACE_RATE_HZ = 60.0
SWEEP_AMPLITUDE_DEG = 22.0
SWEEP_PERIOD_S = 4.0

_LIGHT = np.array([-0.3, -0.6, -0.73])
_LIGHT = _LIGHT / np.linalg.norm(_LIGHT)

_PALETTE = {
    3: (205, 70, 60),
    5: (70, 130, 200),
    7: (80, 180, 90),
    9: (210, 160, 60),
    11: (150, 90, 180),
}


@dataclass(frozen=True)
class SceneSphere:
    center: tuple[float, float, float]
    radius: float
    class_id: int
    orbit: float  # x/y orbit amplitude, meters
    phase: float

    def center_at(self, t: float) -> np.ndarray:
        a = 2.0 * math.pi * t + self.phase
        return np.array(self.center) + self.orbit * np.array([math.cos(a), 0.4 * math.sin(a), 0.0])


@dataclass(frozen=True)
class SceneBox:
    center: tuple[float, float, float]
    half: tuple[float, float, float]
    class_id: int
    slide: float  # x slide amplitude, meters
    phase: float

    def bounds_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        dx = self.slide * math.sin(2.0 * math.pi * t + self.phase)
        center = np.array(self.center) + np.array([dx, 0.0, 0.0])
        half = np.array(self.half)
        return center - half, center + half


SPHERES = (
    SceneSphere((-0.75, 0.10, 2.05), 0.50, class_id=3, orbit=0.18, phase=0.0),
    SceneSphere((0.85, -0.20, 2.55), 0.55, class_id=5, orbit=0.15, phase=2.1),
    SceneSphere((0.05, -0.60, 2.95), 0.50, class_id=7, orbit=0.12, phase=4.2),
)

BOXES = (
    SceneBox((0.15, 0.62, 2.00), (0.42, 0.33, 0.30), class_id=9, slide=0.20, phase=1.0),
    SceneBox((-2.20, 0.60, 3.20), (0.45, 0.33, 0.25), class_id=11, slide=0.15, phase=3.0),
)

OBJECT_CLASSES = tuple(s.class_id for s in SPHERES) + tuple(b.class_id for b in BOXES)


def default_intrinsics(width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=DEFAULT_FOCAL,
        fy=DEFAULT_FOCAL,
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
        depth_scale=DEPTH_SCALE,
    )


def _ray_grid(intr: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    us, vs = np.meshgrid(
        np.arange(intr.width, dtype=np.float64), np.arange(intr.height, dtype=np.float64)
    )
    return (us - intr.cx) / intr.fx, (vs - intr.cy) / intr.fy


def _sphere_depth(rx: np.ndarray, ry: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """z of the nearest sphere intersection along rays t*(rx, ry, 1); inf = miss."""
    a = rx * rx + ry * ry + 1.0
    b = -2.0 * (rx * center[0] + ry * center[1] + center[2])
    c = float(center @ center) - radius * radius
    disc = b * b - 4.0 * a * c
    hit = disc >= 0.0
    z = np.full(rx.shape, np.inf)
    sq = np.sqrt(np.where(hit, disc, 0.0))
    z_near = (-b - sq) / (2.0 * a)
    z[hit & (z_near > NEAR_CLIP)] = z_near[hit & (z_near > NEAR_CLIP)]
    return z


def _box_depth(rx: np.ndarray, ry: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """z of the nearest axis-aligned box intersection; inf = miss."""
    t_near = np.full(rx.shape, -np.inf)
    t_far = np.full(rx.shape, np.inf)
    for d, lo_a, hi_a in ((rx, lo[0], hi[0]), (ry, lo[1], hi[1])):
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = lo_a / d
            t2 = hi_a / d
        parallel = d == 0.0
        inside = (lo_a <= 0.0) & (0.0 <= hi_a)
        t_lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        t_hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        t_near = np.maximum(t_near, t_lo)
        t_far = np.minimum(t_far, t_hi)
    t_near = np.maximum(t_near, lo[2])  # z slab: ray z component is exactly 1
    t_far = np.minimum(t_far, hi[2])
    hit = (t_near <= t_far) & (t_near > NEAR_CLIP)
    return np.where(hit, t_near, np.inf)


def _box_normal(rx: np.ndarray, ry: np.ndarray, z: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Outward face normal at hit points (picks the tightest axis)."""
    px, py, pz = rx * z, ry * z, z
    eps = 1e-6
    normals = np.zeros(rx.shape + (3,))
    for axis, p in enumerate((px, py, pz)):
        normals[..., axis] = np.where(np.abs(p - lo[axis]) < eps, -1.0, normals[..., axis])
        normals[..., axis] = np.where(np.abs(p - hi[axis]) < eps, 1.0, normals[..., axis])
    norm = np.linalg.norm(normals, axis=-1, keepdims=True)
    return np.where(norm > 0, normals / np.maximum(norm, eps), normals)


def _shade(base: tuple[int, int, int], normals: np.ndarray) -> np.ndarray:
    lam = np.clip(normals @ -_LIGHT, 0.0, 1.0)
    shade = 0.4 + 0.6 * lam
    return np.clip(shade[..., None] * np.array(base, dtype=np.float64), 0, 255).astype(np.uint8)


def render_frame(
    frame_index: int,
    total_frames: int = DEFAULT_FRAMES,
    intr: CameraIntrinsics | None = None,
    include_objects: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Render one frame: (RGB color, depth in meters with 0 = invalid, mask)."""
    intr = intr if intr is not None else default_intrinsics()
    rx, ry = _ray_grid(intr)
    t = frame_index / max(total_frames, 1)

    h, w = ry.shape
    depth = np.full((h, w), np.inf)
    color = np.zeros((h, w, 3), dtype=np.uint8)
    mask = np.zeros((h, w), dtype=np.uint8)

    # inf depths flow through shading math before being masked out
    with np.errstate(invalid="ignore", divide="ignore"):
        # back wall with a window hole (rays through it never hit anything)
        wall_x, wall_y = rx * WALL_Z, ry * WALL_Z
        hole = (
            (wall_x >= HOLE_X[0])
            & (wall_x <= HOLE_X[1])
            & (wall_y >= HOLE_Y[0])
            & (wall_y <= HOLE_Y[1])
        )
        checker = ((np.floor(wall_x / 0.45) + np.floor(wall_y / 0.45)) % 2).astype(bool)
        wall_color = np.where(checker[..., None], 190, 165).astype(np.uint8)
        depth[~hole] = WALL_Z
        color[~hole] = wall_color[~hole]

        # floor, visible below the horizon and in front of the wall
        floor_z = np.where(ry > 0, FLOOR_Y / np.maximum(ry, 1e-12), np.inf)
        floor_hit = (floor_z > NEAR_CLIP) & (floor_z < depth)
        stripes = (np.floor(np.where(floor_hit, floor_z, 0.0) / 0.4) % 2).astype(bool)
        floor_color = np.where(stripes[..., None], (150, 120, 95), (130, 104, 82)).astype(np.uint8)
        depth[floor_hit] = floor_z[floor_hit]
        color[floor_hit] = floor_color[floor_hit]

        if include_objects:
            for sphere in SPHERES:
                center = sphere.center_at(t)
                z = _sphere_depth(rx, ry, center, sphere.radius)
                hit = z < depth
                if not hit.any():
                    continue
                zs = np.where(hit, z, 1.0)
                p = np.stack([rx * zs, ry * zs, zs], axis=-1)
                normals = (p - center) / sphere.radius
                shaded = _shade(_PALETTE[sphere.class_id], normals)
                depth[hit] = z[hit]
                color[hit] = shaded[hit]
                mask[hit] = sphere.class_id
            for box in BOXES:
                lo, hi = box.bounds_at(t)
                z = _box_depth(rx, ry, lo, hi)
                hit = z < depth
                if not hit.any():
                    continue
                normals = _box_normal(rx, ry, np.where(hit, z, 1.0), lo, hi)
                shaded = _shade(_PALETTE[box.class_id], normals)
                depth[hit] = z[hit]
                color[hit] = shaded[hit]
                mask[hit] = box.class_id

    depth[~np.isfinite(depth)] = 0.0
    mask[depth == 0.0] = 0
    return color, depth, mask


def sweep_gaze_rows(
    seconds: float = TRACE_SECONDS, rate_hz: float = TRACE_RATE_HZ
) -> list[list[float]]:
    """Gaze trace rows sweeping azimuth sinusoidally across the scene."""
    rows = []
    n = int(seconds * rate_hz)
    for i in range(n):
        t = i / rate_hz
        az = math.radians(SWEEP_AMPLITUDE_DEG) * math.sin(2.0 * math.pi * t / SWEEP_PERIOD_S)
        el = math.radians(6.0) * math.sin(2.0 * math.pi * t / 7.3 + 1.0)
        direction = (
            math.sin(az) * math.cos(el),
            math.sin(el),
            math.cos(az) * math.cos(el),
        )
        rows.append([int(t * 1e6), 0.0, 0.0, 0.0, *direction, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    return rows


def make_fixture(
    out_dir: Path | str,
    frames: int = DEFAULT_FRAMES,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
    include_objects: bool = True,
) -> Path:
    """Write a complete fixture dataset; returns its root directory."""
    root = Path(out_dir)
    intr = default_intrinsics(width, height)
    for sub in (COLOR_DIR, DEPTH_DIR, MASK_DIR):
        (root / sub).mkdir(parents=True, exist_ok=True)

    for k in range(frames):
        color, depth, mask = render_frame(k, frames, intr, include_objects)
        name = FRAME_PATTERN % k
        if not cv2.imwrite(str(root / COLOR_DIR / name), cv2.cvtColor(color, cv2.COLOR_RGB2BGR)):
            raise OSError(f"failed to write {root / COLOR_DIR / name}")
        depth_mm = np.round(depth / intr.depth_scale).astype(np.uint16)
        cv2.imwrite(str(root / DEPTH_DIR / name), depth_mm)
        cv2.imwrite(str(root / MASK_DIR / name), mask)

    intr.to_json(root / INTRINSICS_FILE)

    with open(root / GAZE_TRACE_FILE, "w") as f:
        f.write("t_us,ox,oy,oz,dx,dy,dz,hx,hy,hz,qx,qy,qz,qw\n")
        for row in sweep_gaze_rows():
            f.write(",".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in row) + "\n")
    return root
