"""RGB-D dataset ingestion: frame loading, mask-file detection, back-projection.

Dataset layout on disk::

    <root>/color/%06d.png      8-bit RGB
    <root>/depth/%06d.png      16-bit single channel, invalid = 0
    <root>/mask/%06d.png       8-bit labels, 0 = background (optional)
    <root>/intrinsics.json     fx, fy, cx, cy, width, height, depth_scale

The detector is pluggable: anything with a ``detect(frame_id, color)`` method
returning a DetectionFrame can replace the mask-file reader.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import cv2
import numpy as np

from .core import BACKGROUND_OBJECT_ID, ObjectMap, SurfelCloud

log = logging.getLogger(__name__)

COLOR_DIR = "color"
DEPTH_DIR = "depth"
MASK_DIR = "mask"
FRAME_PATTERN = "%06d.png"
INTRINSICS_FILE = "intrinsics.json"


class DatasetError(Exception):
    """Base class for dataset ingestion failures."""


class FrameFileMissingError(DatasetError, FileNotFoundError):
    """A required frame file does not exist."""


class UnreadableImageError(DatasetError):
    """A frame file exists but cannot be decoded as an image."""


class DimensionMismatchError(DatasetError):
    """Color, depth, and intrinsics disagree about the pixel grid."""


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    depth_scale: float = 0.001  # metres per stored depth unit

    def __post_init__(self) -> None:
        if self.fx == 0 or self.fy == 0:
            raise ValueError("focal lengths must be non-zero")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if self.depth_scale <= 0:
            raise ValueError("depth_scale must be positive")

    @classmethod
    def from_json(cls, path: Path | str) -> "CameraIntrinsics":
        with open(path) as f:
            d = json.load(f)
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            depth_scale=float(d.get("depth_scale", 0.001)),
        )

    def to_json(self, path: Path | str) -> None:
        with open(path, "w") as f:
            json.dump(
                {
                    "fx": self.fx,
                    "fy": self.fy,
                    "cx": self.cx,
                    "cy": self.cy,
                    "width": self.width,
                    "height": self.height,
                    "depth_scale": self.depth_scale,
                },
                f,
                indent=2,
            )


@dataclass(frozen=True, eq=False)
class Detection:
    """One detected object: id, class, confidence, bbox, boolean pixel mask."""

    object_id: int
    class_id: int
    confidence: int
    bbox: tuple[int, int, int, int]
    mask: np.ndarray  # (H, W) bool, read-only; soft masks binarized at 0.5

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask)
        if np.issubdtype(mask.dtype, np.floating):
            mask = mask >= 0.5
        else:
            mask = mask.astype(bool)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "bbox", tuple(int(v) for v in self.bbox))


@dataclass(frozen=True, eq=False)
class DetectionFrame:
    """Per-frame detector output with mutually exclusive pixel masks."""

    frame_id: int
    detections: tuple[Detection, ...]

    @classmethod
    def resolve(cls, frame_id: int, detections: Sequence[Detection]) -> "DetectionFrame":
        """Build a DetectionFrame, resolving mask overlaps.

        A pixel claimed by several detections goes to the highest confidence,
        ties to the lowest object_id.  Detections left empty are dropped.
        """
        if not detections:
            return cls(frame_id, ())
        order = sorted(detections, key=lambda d: (-d.confidence, d.object_id))
        claimed = np.zeros_like(order[0].mask, dtype=bool)
        kept = []
        for det in order:
            mask = det.mask & ~claimed
            if not mask.any():
                continue
            claimed |= mask
            if mask.sum() == det.mask.sum():
                kept.append(det)
            else:
                kept.append(
                    Detection(det.object_id, det.class_id, det.confidence, _mask_bbox(mask), mask)
                )
        kept.sort(key=lambda d: d.object_id)
        return cls(frame_id, tuple(kept))


class Detector(Protocol):
    def detect(self, frame_id: int, color: np.ndarray) -> DetectionFrame:
        ...


def _mask_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(mask)
    return (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def _read_image(path: Path, flags: int) -> np.ndarray:
    if not path.exists():
        raise FrameFileMissingError(str(path))
    img = cv2.imread(str(path), flags)
    if img is None:
        raise UnreadableImageError(f"cannot decode {path}")
    return img


def load_frame(dataset: Path | str, frame_id: int) -> tuple[np.ndarray, np.ndarray, CameraIntrinsics]:
    """Load one RGB-D frame.

    Returns (color, depth, intrinsics) where color is (H, W, 3) uint8 RGB and
    depth is (H, W) float64 metres with invalid pixels (stored 0) set to NaN.
    """
    root = Path(dataset)
    intr_path = root / INTRINSICS_FILE
    if not intr_path.exists():
        raise FrameFileMissingError(str(intr_path))
    intrinsics = CameraIntrinsics.from_json(intr_path)

    color_bgr = _read_image(root / COLOR_DIR / (FRAME_PATTERN % frame_id), cv2.IMREAD_COLOR)
    depth_raw = _read_image(root / DEPTH_DIR / (FRAME_PATTERN % frame_id), cv2.IMREAD_UNCHANGED)

    color = cv2.cvtColor(color_bgr, cv2.COLOR_BGR2RGB)
    if depth_raw.ndim != 2:
        raise UnreadableImageError("depth image must be single channel")
    expected = (intrinsics.height, intrinsics.width)
    if color.shape[:2] != expected:
        raise DimensionMismatchError(f"color is {color.shape[:2]}, intrinsics say {expected}")
    if depth_raw.shape != expected:
        raise DimensionMismatchError(f"depth is {depth_raw.shape}, intrinsics say {expected}")

    depth = depth_raw.astype(np.float64) * intrinsics.depth_scale
    depth[depth_raw == 0] = np.nan
    return color, depth, intrinsics


def list_frames(dataset: Path | str) -> list[int]:
    """Sorted frame ids present in the dataset's color directory."""
    root = Path(dataset) / COLOR_DIR
    if not root.is_dir():
        raise FrameFileMissingError(str(root))
    ids = []
    for p in root.glob("*.png"):
        try:
            ids.append(int(p.stem))
        except ValueError:
            continue
    return sorted(ids)


class MaskFileDetector:
    """Detector fed from precomputed labeled mask images.

    Each distinct non-zero pixel value in ``mask/%06d.png`` becomes one
    object whose class id and object id equal the label.  A missing mask file
    yields an empty DetectionFrame with a warning; segmentation absence must
    not kill the stream.
    """

    def __init__(self, dataset: Path | str, confidence: int = 100):
        self.root = Path(dataset)
        self.confidence = int(confidence)

    def detect(self, frame_id: int, color: np.ndarray) -> DetectionFrame:
        path = self.root / MASK_DIR / (FRAME_PATTERN % frame_id)
        if not path.exists():
            log.warning("mask file %s missing; streaming frame %d without detections", path, frame_id)
            return DetectionFrame(frame_id, ())
        labels = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if labels is None:
            raise UnreadableImageError(f"cannot decode {path}")
        if labels.ndim == 3:
            labels = labels[:, :, 0]
        if labels.shape != color.shape[:2]:
            raise DimensionMismatchError(
                f"mask is {labels.shape}, color is {color.shape[:2]}"
            )
        detections = []
        for label in np.unique(labels):
            if label == 0:
                continue
            mask = labels == label
            detections.append(
                Detection(
                    object_id=int(label),
                    class_id=int(label),
                    confidence=self.confidence,
                    bbox=_mask_bbox(mask),
                    mask=mask,
                )
            )
        return DetectionFrame(frame_id, tuple(detections))


def project(
    color: np.ndarray,
    depth: np.ndarray,
    intrinsics: CameraIntrinsics,
    detections: DetectionFrame,
    capture_timestamp: int = 0,
) -> list[ObjectMap]:
    """Back-project masked pixels into per-object surfel maps.

    Every valid-depth pixel lands in exactly one map: its detection's, or the
    background map (object_id 65535) when no mask claims it.  The background
    map is always present, last in the list, possibly empty.

    For pixel (u, v) at depth d the surfel is::

        position = d * ((u - cx) / fx, (v - cy) / fy, 1)
        radius   = d / fx * sqrt(2) / 2        (pixel footprint estimate)

    Normals are left zero (unknown); weight is 1; both timestamps equal the
    capture timestamp.
    """
    h, w = depth.shape
    if color.shape[:2] != (h, w):
        raise DimensionMismatchError("color and depth must share a pixel grid")
    valid = np.isfinite(depth) & (depth > 0)

    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    ray_x = (us - intrinsics.cx) / intrinsics.fx
    ray_y = (vs - intrinsics.cy) / intrinsics.fy

    def _map_for(pixel_mask: np.ndarray, object_id: int, class_id: int, confidence: int,
                 bbox: tuple[int, int, int, int]) -> ObjectMap:
        vv, uu = np.nonzero(pixel_mask)
        d = depth[vv, uu]
        positions = np.column_stack((ray_x[vv, uu] * d, ray_y[vv, uu] * d, d))
        cloud = SurfelCloud(
            positions=positions,
            colors=color[vv, uu],
            radii=(d / abs(intrinsics.fx) * math.sqrt(2.0) / 2.0).astype(np.float32),
            t_init=np.full(d.shape, capture_timestamp, dtype=np.uint64),
            t_current=np.full(d.shape, capture_timestamp, dtype=np.uint64),
        )
        return ObjectMap(object_id, class_id, confidence, bbox, cloud)

    maps = []
    claimed = np.zeros((h, w), dtype=bool)
    for det in detections.detections:
        pixel_mask = det.mask & valid
        claimed |= det.mask
        maps.append(_map_for(pixel_mask, det.object_id, det.class_id, det.confidence, det.bbox))
    background = valid & ~claimed
    maps.append(
        _map_for(background, BACKGROUND_OBJECT_ID, 0, 0, (0, 0, w - 1, h - 1))
    )
    return maps


def forward_project(
    positions: np.ndarray, intrinsics: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project camera-frame points to pixel coordinates; inverse of ``project``.

    Returns (u, v, depth) arrays; depth is the z coordinate.
    """
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    z = pos[:, 2]
    u = pos[:, 0] / z * intrinsics.fx + intrinsics.cx
    v = pos[:, 1] / z * intrinsics.fy + intrinsics.cy
    return u, v, z


class RgbdDataset:
    """Convenience handle bundling frame loading with a detector."""

    def __init__(self, root: Path | str, detector: Detector | None = None):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FrameFileMissingError(str(self.root))
        self.detector: Detector = detector if detector is not None else MaskFileDetector(self.root)
        self.frame_ids = list_frames(self.root)
        if not self.frame_ids:
            raise DatasetError(f"no frames found under {self.root / COLOR_DIR}")
        self.intrinsics = CameraIntrinsics.from_json(self.root / INTRINSICS_FILE)

    def __len__(self) -> int:
        return len(self.frame_ids)

    def object_maps(self, frame_id: int, capture_timestamp: int = 0) -> list[ObjectMap]:
        color, depth, intr = load_frame(self.root, frame_id)
        det = self.detector.detect(frame_id, color)
        return project(color, depth, intr, det, capture_timestamp)
