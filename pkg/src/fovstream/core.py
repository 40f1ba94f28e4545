"""Domain types and gaze geometry shared by the whole pipeline.

Everything here is an immutable value: surfels and surfel clouds, the gaze
state, the eccentricity-band table, and per-object surfel maps.  Angles are
degrees at the API surface; trig happens in radians internally.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

UNIT_TOLERANCE = 1e-6
DEGENERATE_DISTANCE = 1e-9  # metres; closer than this to the eye is undefined

# object_id reserved for pixels outside every detection mask
BACKGROUND_OBJECT_ID = 0xFFFF


class DegenerateGeometryError(ValueError):
    """A point coincides with the gaze origin; eccentricity is undefined."""


def now_us() -> int:
    """Microseconds from the process-wide steady clock."""
    return time.monotonic_ns() // 1000


def _vec3(value, name: str) -> tuple[float, float, float]:
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


def _unit_or_raise(vec: tuple[float, ...], name: str) -> None:
    norm = math.sqrt(sum(c * c for c in vec))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise ValueError(f"{name} must be unit length, |{name}| = {norm!r}")


@dataclass(frozen=True)
class Surfel:
    """One 3D surface sample.

    The normal may be the zero vector, meaning "unknown"; otherwise it must
    be unit length.  Timestamps are microseconds on the steady clock.
    """

    position: tuple[float, float, float]
    normal: tuple[float, float, float] = (0.0, 0.0, 0.0)
    color: tuple[int, int, int] = (0, 0, 0)
    weight: float = 1.0
    radius: float = 0.0
    t_init: int = 0
    t_current: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "normal", _vec3(self.normal, "normal"))
        if self.normal != (0.0, 0.0, 0.0):
            _unit_or_raise(self.normal, "normal")
        color = tuple(int(c) for c in self.color)
        if len(color) != 3 or any(c < 0 or c > 255 for c in color):
            raise ValueError(f"color channels must be in [0, 255], got {self.color!r}")
        object.__setattr__(self, "color", color)
        if self.weight < 0:
            raise ValueError("weight must be non-negative")
        if self.radius < 0:
            raise ValueError("radius must be non-negative")
        if self.t_init < 0 or self.t_current < self.t_init:
            raise ValueError("timestamps must satisfy 0 <= t_init <= t_current")

    @property
    def normal_known(self) -> bool:
        return self.normal != (0.0, 0.0, 0.0)


class SurfelCloud:
    """Column-oriented collection of surfels.

    Arrays are copied on construction and frozen, so clouds can be shared
    between threads.  ``take`` returns a sub-cloud of the *original* samples;
    nothing in the pipeline ever synthesizes averaged surfels.
    """

    __slots__ = ("positions", "normals", "colors", "weights", "radii", "t_init", "t_current")

    def __init__(
        self,
        positions,
        normals=None,
        colors=None,
        weights=None,
        radii=None,
        t_init=None,
        t_current=None,
    ):
        pos = np.array(positions, dtype=np.float64, copy=True).reshape(-1, 3)
        n = pos.shape[0]

        def _col(value, dtype, shape, fill):
            if value is None:
                arr = np.full(shape, fill, dtype=dtype)
            else:
                arr = np.array(value, copy=True).reshape(shape)
                if not np.issubdtype(arr.dtype, np.dtype(dtype)):
                    arr = arr.astype(dtype)
            return arr

        normals_a = _col(normals, np.float32, (n, 3), 0.0)
        if colors is None:
            colors_a = np.zeros((n, 3), dtype=np.uint8)
        else:
            colors_a = np.array(colors, copy=True).reshape(n, 3)
            if colors_a.dtype != np.uint8:
                if colors_a.size and (colors_a.min() < 0 or colors_a.max() > 255):
                    raise ValueError("color channels must be in [0, 255]")
                colors_a = colors_a.astype(np.uint8)
        weights_a = _col(weights, np.float32, (n,), 1.0)
        radii_a = _col(radii, np.float32, (n,), 0.0)
        t_init_a = _col(t_init, np.uint64, (n,), 0)
        t_current_a = _col(t_current, np.uint64, (n,), 0)

        if n:
            norms = np.linalg.norm(normals_a, axis=1)
            bad = (np.abs(norms - 1.0) > 1e-5) & (norms != 0.0)
            if bad.any():
                raise ValueError("normals must be unit vectors or zero (unknown)")
            if weights_a.min() < 0 or radii_a.min() < 0:
                raise ValueError("weights and radii must be non-negative")
            if (t_current_a < t_init_a).any():
                raise ValueError("t_current must be >= t_init")

        for name, arr in (
            ("positions", pos),
            ("normals", normals_a),
            ("colors", colors_a),
            ("weights", weights_a),
            ("radii", radii_a),
            ("t_init", t_init_a),
            ("t_current", t_current_a),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __setattr__(self, name, value):
        raise AttributeError("SurfelCloud is immutable")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def empty(cls) -> "SurfelCloud":
        return cls(np.empty((0, 3), dtype=np.float64))

    @classmethod
    def from_surfels(cls, surfels: Iterable[Surfel]) -> "SurfelCloud":
        items = list(surfels)
        if not items:
            return cls.empty()
        return cls(
            positions=[s.position for s in items],
            normals=[s.normal for s in items],
            colors=[s.color for s in items],
            weights=[s.weight for s in items],
            radii=[s.radius for s in items],
            t_init=[s.t_init for s in items],
            t_current=[s.t_current for s in items],
        )

    @classmethod
    def concatenate(cls, clouds: Sequence["SurfelCloud"]) -> "SurfelCloud":
        clouds = [c for c in clouds if len(c)]
        if not clouds:
            return cls.empty()
        return cls(
            positions=np.concatenate([c.positions for c in clouds]),
            normals=np.concatenate([c.normals for c in clouds]),
            colors=np.concatenate([c.colors for c in clouds]),
            weights=np.concatenate([c.weights for c in clouds]),
            radii=np.concatenate([c.radii for c in clouds]),
            t_init=np.concatenate([c.t_init for c in clouds]),
            t_current=np.concatenate([c.t_current for c in clouds]),
        )

    def take(self, indices) -> "SurfelCloud":
        idx = np.asarray(indices)
        return SurfelCloud(
            positions=self.positions[idx],
            normals=self.normals[idx],
            colors=self.colors[idx],
            weights=self.weights[idx],
            radii=self.radii[idx],
            t_init=self.t_init[idx],
            t_current=self.t_current[idx],
        )

    def surfel(self, i: int) -> Surfel:
        return Surfel(
            position=tuple(self.positions[i]),
            normal=tuple(float(x) for x in self.normals[i]),
            color=tuple(int(x) for x in self.colors[i]),
            weight=float(self.weights[i]),
            radius=float(self.radii[i]),
            t_init=int(self.t_init[i]),
            t_current=int(self.t_current[i]),
        )

    @property
    def normals_known(self) -> bool:
        """True when every sample carries a valid (unit) normal."""
        if not len(self):
            return False
        return bool((np.abs(np.linalg.norm(self.normals, axis=1) - 1.0) <= 1e-5).all())

    def equals(self, other: "SurfelCloud") -> bool:
        """Bit-exact equality across all columns."""
        return (
            len(self) == len(other)
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.normals, other.normals)
            and np.array_equal(self.colors, other.colors)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.radii, other.radii)
            and np.array_equal(self.t_init, other.t_init)
            and np.array_equal(self.t_current, other.t_current)
        )


@dataclass(frozen=True)
class GazeState:
    """Gaze ray plus HMD pose, stamped with a sequence number.

    Updates are replaced wholesale; a holder keeps the highest ``seq`` it has
    seen and discards stale messages.
    """

    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    hmd_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    hmd_orientation: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)
    seq: int = 0
    timestamp: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "origin", _vec3(self.origin, "origin"))
        object.__setattr__(self, "direction", _vec3(self.direction, "direction"))
        object.__setattr__(self, "hmd_position", _vec3(self.hmd_position, "hmd_position"))
        quat = tuple(float(c) for c in self.hmd_orientation)
        if len(quat) != 4:
            raise ValueError("hmd_orientation must be a quaternion (4 components)")
        object.__setattr__(self, "hmd_orientation", quat)
        _unit_or_raise(self.direction, "direction")
        _unit_or_raise(self.hmd_orientation, "hmd_orientation")
        if self.seq < 0 or self.timestamp < 0:
            raise ValueError("seq and timestamp must be non-negative")


@dataclass(frozen=True)
class FoveationModel:
    """Eccentricity-band table: conical regions mapped to voxel leaf sizes.

    ``bands`` is ordered by increasing maximum eccentricity; the last band
    must reach 180 degrees so every direction falls somewhere.  Leaf sizes
    are non-decreasing outward (acuity only ever drops), and a leaf of 0
    means "do not down-sample" (the foveal region).
    """

    bands: tuple[tuple[float, float], ...]
    highlight_classes: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        bands = tuple((float(e), float(leaf)) for e, leaf in self.bands)
        if not bands:
            raise ValueError("at least one band is required")
        eccs = [e for e, _ in bands]
        leaves = [s for _, s in bands]
        if any(b <= a for a, b in zip(eccs, eccs[1:])):
            raise ValueError("band eccentricities must be strictly increasing")
        if eccs[-1] < 180.0:
            raise ValueError("last band must cover up to 180 degrees")
        if any(s < 0 for s in leaves):
            raise ValueError("leaf sizes must be non-negative")
        if any(b < a for a, b in zip(leaves, leaves[1:])):
            raise ValueError("leaf sizes must be non-decreasing with eccentricity")
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "highlight_classes", frozenset(int(c) for c in self.highlight_classes))

    @property
    def max_eccentricities(self) -> np.ndarray:
        return np.array([e for e, _ in self.bands], dtype=np.float64)

    def leaf_size(self, band: int) -> float:
        return self.bands[band][1]


@dataclass(frozen=True, eq=False)
class ObjectMap:
    """Per-detected-object surfel collection.

    ``bbox`` is inclusive pixel (min_x, min_y, max_x, max_y); whether it fits
    the image domain is checked at ingestion, where the domain is known.
    """

    object_id: int
    class_id: int
    confidence: int
    bbox: tuple[int, int, int, int]
    surfels: SurfelCloud

    def __post_init__(self) -> None:
        if not 0 <= self.class_id <= 100:
            raise ValueError(f"class_id must be in [0, 100], got {self.class_id}")
        if not 0 <= self.confidence <= 100:
            raise ValueError(f"confidence must be in [0, 100], got {self.confidence}")
        if not 0 <= self.object_id <= 0xFFFF:
            raise ValueError("object_id must fit in u16")
        bbox = tuple(int(v) for v in self.bbox)
        if len(bbox) != 4:
            raise ValueError("bbox must have 4 entries")
        if any(v < 0 for v in bbox):
            raise ValueError("bbox entries must be non-negative")
        if bbox[2] < bbox[0] or bbox[3] < bbox[1]:
            raise ValueError("bbox max must be >= min per axis")
        object.__setattr__(self, "bbox", bbox)

    @property
    def is_background(self) -> bool:
        return self.object_id == BACKGROUND_OBJECT_ID


def eccentricity_of(gaze: GazeState, point) -> float:
    """Angular distance in degrees between the gaze ray and the ray to ``point``.

    Raises DegenerateGeometryError when the point sits on the gaze origin.
    """
    p = np.asarray(point, dtype=np.float64).reshape(3)
    v = p - np.asarray(gaze.origin)
    dist = float(np.linalg.norm(v))
    if dist < DEGENERATE_DISTANCE:
        raise DegenerateGeometryError(f"point {tuple(p)} coincides with the gaze origin")
    cosang = float(np.dot(np.asarray(gaze.direction), v) / dist)
    return math.degrees(math.acos(min(1.0, max(-1.0, cosang))))


def point_eccentricities(gaze: GazeState, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized eccentricity for an (N, 3) array of points.

    Returns (degrees, degenerate_mask).  Points at the gaze origin get
    eccentricity 0 and a set mask bit; callers decide how to count them.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    v = pts - np.asarray(gaze.origin)
    dist = np.linalg.norm(v, axis=1)
    degenerate = dist < DEGENERATE_DISTANCE
    safe = np.where(degenerate, 1.0, dist)
    cosang = (v @ np.asarray(gaze.direction)) / safe
    np.clip(cosang, -1.0, 1.0, out=cosang)
    angles = np.degrees(np.arccos(cosang))
    angles[degenerate] = 0.0
    return angles, degenerate


def band_of(model: FoveationModel, eccentricity: float) -> int:
    """Smallest band whose maximum eccentricity covers the value.

    Band boundaries belong to the inner band (closed upper bound).
    """
    if not 0.0 <= eccentricity <= 180.0:
        raise ValueError(f"eccentricity must be in [0, 180], got {eccentricity}")
    idx = int(np.searchsorted(model.max_eccentricities, eccentricity, side="left"))
    return min(idx, len(model.bands) - 1)


def bands_of(model: FoveationModel, eccentricities: np.ndarray) -> np.ndarray:
    """Vectorized ``band_of`` over an array of degrees."""
    idx = np.searchsorted(model.max_eccentricities, eccentricities, side="left")
    return np.minimum(idx, len(model.bands) - 1)
