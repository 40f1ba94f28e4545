"""Foveated partitioning and sampling of per-object surfel maps.

Each object map is split into concentric conical regions around the gaze
ray; peripheral regions are thinned on an axis-aligned voxel grid anchored
at the world origin.  Objects whose class is in the model's highlight set
skip the thinning entirely, staying dense however far into the periphery
they sit.  The three streaming conditions build on these pieces:

REF       everything, untouched
SEMA      detected objects only, untouched, background dropped
SEMA_FOV  objects and background, partitioned and sampled, highlights kept
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import (
    BACKGROUND_OBJECT_ID,
    FoveationModel,
    GazeState,
    ObjectMap,
    SurfelCloud,
    bands_of,
    point_eccentricities,
)

# Degenerate surfels (at the gaze origin) are survivable; they land in band 0
# and get counted here so operators can notice a broken extrinsic calibration.
DIAGNOSTICS: Counter = Counter()


class StreamCondition(enum.Enum):
    REF = "ref"
    SEMA = "sema"
    SEMA_FOV = "sema-fov"

    @classmethod
    def parse(cls, text: str) -> "StreamCondition":
        normalized = text.strip().lower().replace("_", "-")
        for cond in cls:
            if cond.value == normalized:
                return cond
        raise ValueError(f"unknown condition {text!r}; expected ref, sema, or sema-fov")


@dataclass(frozen=True, eq=False)
class RegionBucket:
    """Surfels of one object falling in one eccentricity band.

    ``highlighted`` buckets keep their true band index but are exempt from
    sampling.
    """

    object_id: int
    band: int
    surfels: SurfelCloud
    highlighted: bool = False


def partition(obj_map: ObjectMap, gaze: GazeState, model: FoveationModel) -> list[RegionBucket]:
    """Assign every surfel of the map to its eccentricity band.

    Returns buckets ordered by band index; empty bands are omitted.  If the
    map's class is highlighted, every bucket is flagged.
    """
    cloud = obj_map.surfels
    if not len(cloud):
        return []
    ecc, degenerate = point_eccentricities(gaze, cloud.positions)
    n_degenerate = int(degenerate.sum())
    if n_degenerate:
        DIAGNOSTICS["degenerate_at_gaze_origin"] += n_degenerate
    bands = bands_of(model, ecc)
    highlighted = obj_map.class_id in model.highlight_classes
    buckets = []
    for band in np.unique(bands):
        idx = np.nonzero(bands == band)[0]
        buckets.append(RegionBucket(obj_map.object_id, int(band), cloud.take(idx), highlighted))
    return buckets


def voxel_downsample(cloud: SurfelCloud, leaf_size: float) -> SurfelCloud:
    """Keep one original surfel per occupied voxel.

    The grid is axis-aligned, anchored at the world origin (voxel index is
    floor(coordinate / leaf) per axis).  The survivor is the input surfel
    nearest its voxel's center; ties break toward the earlier input.  Output
    preserves input order.
    """
    if leaf_size <= 0:
        raise ValueError(f"leaf_size must be positive, got {leaf_size}")
    n = len(cloud)
    if n == 0:
        return cloud
    voxels = np.floor(cloud.positions / leaf_size).astype(np.int64)
    groups = _group_ids(voxels)
    centers = (voxels + 0.5) * leaf_size
    dist2 = np.einsum("ij,ij->i", cloud.positions - centers, cloud.positions - centers)
    order = np.lexsort((np.arange(n), dist2, groups))
    sorted_groups = groups[order]
    first = np.ones(n, dtype=bool)
    first[1:] = sorted_groups[1:] != sorted_groups[:-1]
    keep = np.sort(order[first])
    return cloud.take(keep)


def _group_ids(voxels: np.ndarray) -> np.ndarray:
    """Collapse integer voxel triples to one group id per distinct voxel."""
    lo = voxels.min(axis=0)
    span = voxels.max(axis=0) - lo + 1
    if int(span[0]) * int(span[1]) * int(span[2]) < 2**62:
        shifted = voxels - lo
        key = (shifted[:, 0] * span[1] + shifted[:, 1]) * span[2] + shifted[:, 2]
        _, inverse = np.unique(key, return_inverse=True)
        return inverse
    _, inverse = np.unique(voxels, axis=0, return_inverse=True)
    return inverse


def sample(buckets: Sequence[RegionBucket], model: FoveationModel) -> list[RegionBucket]:
    """Down-sample peripheral buckets; foveal and highlighted ones pass through."""
    out = []
    for bucket in buckets:
        leaf = model.leaf_size(bucket.band)
        if bucket.band == 0 or bucket.highlighted or leaf == 0.0:
            out.append(bucket)
        else:
            out.append(replace(bucket, surfels=voxel_downsample(bucket.surfels, leaf)))
    return out


def apply_condition(
    maps: Sequence[ObjectMap],
    gaze: GazeState,
    model: FoveationModel,
    condition: StreamCondition,
) -> list[RegionBucket]:
    """Turn a frame's object maps into the buckets the condition streams.

    REF passes every map through whole (band 0, no sampling); SEMA does the
    same but drops the background map; SEMA_FOV partitions and samples
    everything, honoring the highlight override.  Empty maps yield nothing.
    """
    if condition is StreamCondition.REF:
        return [
            RegionBucket(m.object_id, 0, m.surfels, False)
            for m in maps
            if len(m.surfels)
        ]
    if condition is StreamCondition.SEMA:
        return [
            RegionBucket(m.object_id, 0, m.surfels, False)
            for m in maps
            if len(m.surfels) and not m.is_background
        ]
    buckets: list[RegionBucket] = []
    for m in maps:
        buckets.extend(sample(partition(m, gaze, model), model))
    return buckets
