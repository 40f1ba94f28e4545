import numpy as np
import pytest

import cv2

from fovstream.core import FoveationModel, SurfelCloud
from fovstream.fixture import make_fixture
from fovstream.ingest import COLOR_DIR, DEPTH_DIR, FRAME_PATTERN, INTRINSICS_FILE, MASK_DIR, CameraIntrinsics


@pytest.fixture(scope="session")
def fixture_dataset(tmp_path_factory):
    """The standard synthetic dataset, generated once per test session."""
    root = tmp_path_factory.mktemp("dataset")
    make_fixture(root, frames=24)
    return root


@pytest.fixture(scope="session")
def empty_dataset(tmp_path_factory):
    """Background-only variant (no objects, masks all zero)."""
    root = tmp_path_factory.mktemp("dataset_empty")
    make_fixture(root, frames=4, include_objects=False)
    return root


@pytest.fixture(scope="session")
def default_model() -> FoveationModel:
    return FoveationModel(
        bands=((10.0, 0.0), (30.0, 0.02), (180.0, 0.08)),
        highlight_classes=frozenset({5}),
    )


def random_cloud(rng: np.random.Generator, n: int, *, spread: float = 3.0,
                 with_normals: bool = False) -> SurfelCloud:
    """Seeded random surfel cloud in front of the camera (z > 0.1)."""
    positions = rng.uniform(-spread, spread, size=(n, 3))
    positions[:, 2] = rng.uniform(0.1, spread, size=n)
    normals = np.zeros((n, 3), dtype=np.float32)
    if with_normals:
        raw = rng.normal(size=(n, 3))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        normals = raw.astype(np.float32)
    return SurfelCloud(
        positions=positions,
        normals=normals,
        colors=rng.integers(0, 256, size=(n, 3), dtype=np.uint8),
        weights=rng.uniform(0.0, 4.0, size=n).astype(np.float32),
        radii=rng.uniform(0.0, 0.05, size=n).astype(np.float32),
        t_init=rng.integers(0, 10**6, size=n, dtype=np.uint64),
        t_current=rng.integers(10**6, 2 * 10**6, size=n, dtype=np.uint64),
    )


def write_dataset(root, frames, intrinsics: CameraIntrinsics) -> str:
    """Write (color RGB, depth meters, mask label) triples as a dataset on disk."""
    for sub in (COLOR_DIR, DEPTH_DIR, MASK_DIR):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for k, (color, depth_m, mask) in enumerate(frames):
        name = FRAME_PATTERN % k
        cv2.imwrite(str(root / COLOR_DIR / name), cv2.cvtColor(color, cv2.COLOR_RGB2BGR))
        depth_raw = np.round(depth_m / intrinsics.depth_scale).astype(np.uint16)
        cv2.imwrite(str(root / DEPTH_DIR / name), depth_raw)
        cv2.imwrite(str(root / MASK_DIR / name), mask.astype(np.uint8))
    intrinsics.to_json(root / INTRINSICS_FILE)
    return str(root)
