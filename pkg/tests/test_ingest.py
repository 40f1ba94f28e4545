import json
import math

import numpy as np
import pytest

from conftest import write_dataset
from fovstream.core import BACKGROUND_OBJECT_ID
from fovstream.ingest import (
    CameraIntrinsics,
    Detection,
    DetectionFrame,
    DimensionMismatchError,
    FrameFileMissingError,
    MaskFileDetector,
    RgbdDataset,
    UnreadableImageError,
    forward_project,
    list_frames,
    load_frame,
    project,
)

INTR = CameraIntrinsics(fx=100.0, fy=100.0, cx=4.0, cy=3.0, width=8, height=6, depth_scale=0.001)


def tiny_frame():
    """8x6 frame: two labeled blobs, one invalid-depth pixel, known values."""
    color = np.zeros((6, 8, 3), dtype=np.uint8)
    color[..., 0] = np.arange(8, dtype=np.uint8) * 30
    color[..., 1] = 100
    color[..., 2] = np.arange(6, dtype=np.uint8)[:, None] * 40
    depth = np.full((6, 8), 2.0)
    depth[5, 7] = 0.0  # invalid
    depth[0, 0] = 0.5
    mask = np.zeros((6, 8), dtype=np.uint8)
    mask[1:3, 1:4] = 3
    mask[4:6, 5:7] = 9
    return color, depth, mask


# --- oracle: scalar back-projection ------------------------------------------


def oracle_surfel(u, v, d, intr):
    x = d * (u - intr.cx) / intr.fx
    y = d * (v - intr.cy) / intr.fy
    r = d / intr.fx * math.sqrt(2.0) / 2.0
    return (x, y, d), r


# --- intrinsics ---------------------------------------------------------------


def test_intrinsics_json_roundtrip(tmp_path):
    path = tmp_path / "intrinsics.json"
    INTR.to_json(path)
    assert CameraIntrinsics.from_json(path) == INTR
    raw = json.loads(path.read_text())
    assert set(raw) == {"fx", "fy", "cx", "cy", "width", "height", "depth_scale"}


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=0.0, fy=100.0, cx=4.0, cy=3.0, width=8, height=6, depth_scale=0.001)
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=100.0, fy=100.0, cx=8.0, cy=3.0, width=8, height=6, depth_scale=0.001)
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=100.0, fy=100.0, cx=4.0, cy=3.0, width=8, height=6, depth_scale=0.0)


# --- loading ------------------------------------------------------------------


def test_load_frame_units_and_sentinel(tmp_path):
    color, depth, mask = tiny_frame()
    root = write_dataset(tmp_path, [(color, depth, mask)], INTR)
    loaded_color, loaded_depth, intr = load_frame(root, 0)
    assert intr == INTR
    assert loaded_color.dtype == np.uint8
    assert np.array_equal(loaded_color, color)
    # stored 2000 (mm) with scale 0.001 -> 2.0 m; stored 0 -> NaN, not 0 m
    assert loaded_depth[2, 2] == pytest.approx(2.0)
    assert loaded_depth[0, 0] == pytest.approx(0.5)
    assert math.isnan(loaded_depth[5, 7])


def test_load_frame_missing_file(tmp_path):
    color, depth, mask = tiny_frame()
    root = write_dataset(tmp_path, [(color, depth, mask)], INTR)
    with pytest.raises(FrameFileMissingError):
        load_frame(root, 7)


def test_load_frame_dimension_mismatch(tmp_path):
    color, depth, mask = tiny_frame()
    small_depth = depth[:4, :4]
    root = write_dataset(tmp_path, [(color, small_depth, mask)], INTR)
    with pytest.raises(DimensionMismatchError):
        load_frame(root, 0)


def test_load_frame_unreadable(tmp_path):
    color, depth, mask = tiny_frame()
    root = write_dataset(tmp_path, [(color, depth, mask)], INTR)
    (tmp_path / "color" / "000000.png").write_bytes(b"not a png")
    with pytest.raises(UnreadableImageError):
        load_frame(root, 0)


def test_list_frames(tmp_path):
    color, depth, mask = tiny_frame()
    root = write_dataset(tmp_path, [(color, depth, mask)] * 3, INTR)
    assert list_frames(root) == [0, 1, 2]


# --- detection ----------------------------------------------------------------


def test_mask_file_detector_blobs(tmp_path):
    color, depth, mask = tiny_frame()
    root = write_dataset(tmp_path, [(color, depth, mask)], INTR)
    det = MaskFileDetector(root).detect(0, color)
    assert [d.object_id for d in det.detections] == [3, 9]
    d3, d9 = det.detections
    assert d3.class_id == 3 and d9.class_id == 9
    # bboxes equal the blobs' pixel extents (min/max scan oracle)
    assert d3.bbox == (1, 1, 3, 2)
    assert d9.bbox == (5, 4, 6, 5)
    assert d3.mask.sum() == 6 and d9.mask.sum() == 4


def test_mask_file_detector_empty_and_missing(tmp_path, caplog):
    color, depth, mask = tiny_frame()
    root = write_dataset(tmp_path, [(color, depth, np.zeros_like(mask))], INTR)
    det = MaskFileDetector(root).detect(0, color)
    assert det.detections == ()

    import logging

    with caplog.at_level(logging.WARNING):
        missing = MaskFileDetector(root).detect(5, color)
    assert missing.detections == ()
    assert any("mask" in r.message for r in caplog.records)


def test_detection_soft_mask_binarized():
    soft = np.array([[0.2, 0.5], [0.9, 0.49]])
    det = Detection(object_id=1, class_id=1, confidence=80, bbox=(0, 0, 1, 1), mask=soft)
    assert det.mask.tolist() == [[False, True], [True, False]]


def test_detection_frame_overlap_resolution():
    base = np.zeros((4, 4), dtype=bool)
    m1 = base.copy()
    m1[0:2, 0:3] = True
    m2 = base.copy()
    m2[1:3, 1:4] = True  # overlaps m1 on (1,1),(1,2)
    low = Detection(object_id=2, class_id=1, confidence=40, bbox=(0, 0, 2, 1), mask=m1)
    high = Detection(object_id=7, class_id=2, confidence=90, bbox=(1, 1, 3, 2), mask=m2)
    frame = DetectionFrame.resolve(0, [low, high])
    got = {d.object_id: d for d in frame.detections}
    assert set(got) == {2, 7}
    assert got[7].mask.sum() == 6  # winner keeps all pixels
    assert got[2].mask.sum() == 4  # loser's overlap removed
    assert not (got[2].mask & got[7].mask).any()
    assert got[2].bbox == (0, 0, 2, 1)  # bbox recomputed over surviving pixels


def test_detection_frame_tie_goes_to_lower_object_id():
    m = np.ones((2, 2), dtype=bool)
    a = Detection(object_id=5, class_id=1, confidence=50, bbox=(0, 0, 1, 1), mask=m)
    b = Detection(object_id=3, class_id=2, confidence=50, bbox=(0, 0, 1, 1), mask=m)
    frame = DetectionFrame.resolve(0, [a, b])
    assert [d.object_id for d in frame.detections] == [3]


# --- projection ---------------------------------------------------------------


def test_project_principal_ray():
    color = np.zeros((6, 8, 3), dtype=np.uint8)
    depth = np.full((6, 8), np.nan)
    depth[3, 4] = 2.0  # exactly the principal point
    maps = project(color, depth, INTR, DetectionFrame(0, ()), 0)
    background = maps[-1]
    assert len(background.surfels) == 1
    assert background.surfels.positions[0] == pytest.approx([0.0, 0.0, 2.0])


def test_project_hand_computed_pinhole():
    intr = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0,
                            width=1000, height=500, depth_scale=0.001)
    color = np.zeros((500, 1000, 3), dtype=np.uint8)
    depth = np.full((500, 1000), np.nan)
    depth[240, 820] = 1.0
    maps = project(color, depth, intr, DetectionFrame(0, ()), 0)
    assert maps[-1].surfels.positions[0] == pytest.approx([1.0, 0.0, 1.0])


def test_project_matches_scalar_oracle_and_partitions_pixels():
    color, depth, mask = tiny_frame()
    nan_depth = depth.copy()
    nan_depth[nan_depth == 0] = np.nan
    detections = [
        Detection(object_id=int(v), class_id=int(v), confidence=100,
                  bbox=(0, 0, 7, 5), mask=(mask == v))
        for v in (3, 9)
    ]
    maps = project(color, nan_depth, INTR, DetectionFrame.resolve(0, detections), 777)

    total = sum(len(m.surfels) for m in maps)
    assert total == int(np.isfinite(nan_depth).sum())  # exact pixel partition
    assert maps[-1].object_id == BACKGROUND_OBJECT_ID
    assert maps[-1].class_id == 0 and maps[-1].confidence == 0

    by_id = {m.object_id: m for m in maps}
    assert len(by_id[3].surfels) == 6
    assert len(by_id[9].surfels) == 4

    for m in maps:
        cloud = m.surfels
        assert (cloud.t_init == 777).all() and (cloud.t_current == 777).all()
        assert not cloud.normals_known
        for i in range(len(cloud)):
            x, y, d = cloud.positions[i]
            u = round(x / d * INTR.fx + INTR.cx)
            v = round(y / d * INTR.fy + INTR.cy)
            (ex, ey, ed), er = oracle_surfel(u, v, nan_depth[v, u], INTR)
            assert (x, y, d) == pytest.approx((ex, ey, ed), abs=1e-12)
            assert cloud.radii[i] == pytest.approx(er, rel=1e-6)
            assert tuple(cloud.colors[i]) == tuple(color[v, u])
            if m.object_id != BACKGROUND_OBJECT_ID:
                assert mask[v, u] == m.class_id  # class matches source pixel


def test_project_all_invalid_depth():
    color = np.zeros((6, 8, 3), dtype=np.uint8)
    depth = np.full((6, 8), np.nan)
    maps = project(color, depth, INTR, DetectionFrame(0, ()), 0)
    assert all(len(m.surfels) == 0 for m in maps)


def test_forward_project_roundtrip_on_fixture(fixture_dataset):
    ds = RgbdDataset(fixture_dataset)
    maps = ds.object_maps(0)
    color, depth, intr = load_frame(fixture_dataset, 0)
    for m in maps:
        if not len(m.surfels):
            continue
        u, v, z = forward_project(m.surfels.positions, intr)
        ui = np.round(u).astype(int)
        vi = np.round(v).astype(int)
        assert np.max(np.abs(u - ui)) <= 0.5
        assert np.max(np.abs(v - vi)) <= 0.5
        assert np.max(np.abs(depth[vi, ui] - z)) <= 1e-6


def test_rgbd_dataset_handle(fixture_dataset):
    ds = RgbdDataset(fixture_dataset)
    assert len(ds) == 24
    assert ds.frame_ids[0] == 0
    maps = ds.object_maps(3, capture_timestamp=42)
    assert maps[-1].is_background
    assert all((m.surfels.t_init == 42).all() for m in maps if len(m.surfels))
