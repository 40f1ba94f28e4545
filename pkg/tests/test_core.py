import math

import numpy as np
import pytest

from fovstream.core import (
    DegenerateGeometryError,
    FoveationModel,
    GazeState,
    ObjectMap,
    Surfel,
    SurfelCloud,
    band_of,
    bands_of,
    eccentricity_of,
    point_eccentricities,
)


# --- oracles (independent scalar implementations) ----------------------------


def oracle_eccentricity(origin, direction, point) -> float:
    """Pure-python angle between the gaze ray and the ray to the point."""
    rel = [p - o for p, o in zip(point, origin)]
    dist = math.sqrt(sum(c * c for c in rel))
    if dist < 1e-9:
        raise ZeroDivisionError
    dot = sum(d * r / dist for d, r in zip(direction, rel))
    return math.degrees(math.acos(max(-1.0, min(1.0, dot))))


def oracle_band(bands, e) -> int:
    for i, (max_ecc, _) in enumerate(bands):
        if e <= max_ecc:
            return i
    return len(bands) - 1


# --- eccentricity -------------------------------------------------------------


def test_eccentricity_on_axis_is_zero():
    gaze = GazeState(direction=(0.0, 0.0, 1.0))
    assert eccentricity_of(gaze, (0.0, 0.0, 2.0)) == pytest.approx(0.0, abs=1e-9)


def test_eccentricity_perpendicular_is_ninety():
    gaze = GazeState(direction=(0.0, 0.0, 1.0))
    assert eccentricity_of(gaze, (3.0, 0.0, 0.0)) == pytest.approx(90.0, abs=1e-9)


def test_eccentricity_diagonal_is_fortyfive():
    gaze = GazeState(direction=(0.0, 0.0, 1.0))
    assert eccentricity_of(gaze, (1.0, 0.0, 1.0)) == pytest.approx(45.0, abs=1e-6)


def test_eccentricity_behind_is_180():
    gaze = GazeState(direction=(0.0, 0.0, 1.0))
    assert eccentricity_of(gaze, (0.0, 0.0, -1.0)) == pytest.approx(180.0, abs=1e-9)


def test_eccentricity_matches_oracle_randomized():
    rng = np.random.default_rng(7)
    for _ in range(500):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        origin = rng.uniform(-5, 5, size=3)
        point = rng.uniform(-5, 5, size=3)
        if np.linalg.norm(point - origin) < 1e-6:
            continue
        gaze = GazeState(origin=tuple(origin), direction=tuple(direction))
        expected = oracle_eccentricity(origin, direction, point)
        assert eccentricity_of(gaze, tuple(point)) == pytest.approx(expected, abs=1e-9)
        assert 0.0 <= eccentricity_of(gaze, tuple(point)) <= 180.0


def test_eccentricity_rigid_transform_invariance():
    rng = np.random.default_rng(11)
    for _ in range(100):
        # random rotation via QR; random translation
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        t = rng.uniform(-3, 3, size=3)
        origin = rng.uniform(-2, 2, size=3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        point = origin + rng.uniform(0.5, 4.0) * rng.normal(size=3)

        before = eccentricity_of(GazeState(origin=tuple(origin), direction=tuple(direction)), tuple(point))
        d2 = q @ direction
        d2 /= np.linalg.norm(d2)  # re-unit against fp drift
        after = eccentricity_of(
            GazeState(origin=tuple(q @ origin + t), direction=tuple(d2)),
            tuple(q @ point + t),
        )
        assert after == pytest.approx(before, abs=1e-5)


def test_eccentricity_degenerate_point_raises():
    gaze = GazeState(origin=(1.0, 2.0, 3.0))
    with pytest.raises(DegenerateGeometryError):
        eccentricity_of(gaze, (1.0, 2.0, 3.0 + 1e-12))


def test_point_eccentricities_matches_scalar():
    rng = np.random.default_rng(3)
    gaze = GazeState(origin=(0.5, -0.5, 0.0), direction=(0.0, 0.0, 1.0))
    points = rng.uniform(-4, 4, size=(300, 3))
    degrees, degenerate = point_eccentricities(gaze, points)
    assert not degenerate.any()
    for i in range(len(points)):
        assert degrees[i] == pytest.approx(eccentricity_of(gaze, tuple(points[i])), abs=1e-9)


def test_point_eccentricities_flags_degenerate():
    gaze = GazeState(origin=(1.0, 1.0, 1.0))
    points = np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 3.0]])
    degrees, degenerate = point_eccentricities(gaze, points)
    assert degenerate.tolist() == [True, False]
    assert degrees[0] == 0.0
    assert degrees[1] == pytest.approx(0.0, abs=1e-9)


# --- band lookup ---------------------------------------------------------------


def test_band_of_default_bands():
    model = FoveationModel(bands=((10.0, 0.0), (30.0, 0.02), (180.0, 0.08)))
    assert band_of(model, 5.0) == 0
    assert band_of(model, 10.0) == 0  # boundary belongs to the inner band
    assert band_of(model, 30.0) == 1
    assert band_of(model, 30.001) == 2
    assert band_of(model, 180.0) == 2


def test_band_of_matches_linear_scan_oracle():
    rng = np.random.default_rng(23)
    for _ in range(200):
        n = int(rng.integers(1, 6))
        eccs = np.sort(rng.uniform(1.0, 179.0, size=n - 1)) if n > 1 else np.array([])
        bands = tuple((float(e), 0.01 * i) for i, e in enumerate(eccs)) + ((180.0, 0.01 * n),)
        model = FoveationModel(bands=bands)
        for e in rng.uniform(0.0, 180.0, size=50):
            assert band_of(model, float(e)) == oracle_band(bands, float(e))


def test_band_of_monotone():
    model = FoveationModel(bands=((10.0, 0.0), (30.0, 0.02), (180.0, 0.08)))
    es = np.sort(np.random.default_rng(5).uniform(0, 180, size=200))
    bands = [band_of(model, float(e)) for e in es]
    assert bands == sorted(bands)


def test_bands_of_matches_band_of():
    model = FoveationModel(bands=((10.0, 0.0), (30.0, 0.02), (180.0, 0.08)))
    es = np.random.default_rng(9).uniform(0, 180, size=500)
    vec = bands_of(model, es)
    assert vec.tolist() == [band_of(model, float(e)) for e in es]


def test_band_of_out_of_range_rejected():
    model = FoveationModel(bands=((180.0, 0.0),))
    with pytest.raises(ValueError):
        band_of(model, -0.001)
    with pytest.raises(ValueError):
        band_of(model, 180.001)


# --- type validation ------------------------------------------------------------


def test_surfel_validation():
    s = Surfel(position=(0, 0, 1), normal=(0, 0, 1), color=(10, 20, 30),
               weight=1.0, radius=0.01, t_init=5, t_current=9)
    assert s.normal_known
    unknown = Surfel(position=(0, 0, 1), normal=(0, 0, 0), color=(1, 2, 3),
                     weight=0.0, radius=0.0, t_init=0, t_current=0)
    assert not unknown.normal_known
    with pytest.raises(ValueError):
        Surfel(position=(0, 0, 1), normal=(0, 0, 0.5), color=(1, 2, 3),
               weight=1.0, radius=0.01, t_init=0, t_current=0)
    with pytest.raises(ValueError):
        Surfel(position=(0, 0, 1), normal=(0, 0, 1), color=(1, 2, 300),
               weight=1.0, radius=0.01, t_init=0, t_current=0)
    with pytest.raises(ValueError):
        Surfel(position=(0, 0, 1), normal=(0, 0, 1), color=(1, 2, 3),
               weight=-1.0, radius=0.01, t_init=0, t_current=0)
    with pytest.raises(ValueError):
        Surfel(position=(0, 0, 1), normal=(0, 0, 1), color=(1, 2, 3),
               weight=1.0, radius=0.01, t_init=10, t_current=5)


def test_surfel_cloud_roundtrip_and_immutability():
    # weight/radius columns are f32; exactly representable values roundtrip
    s1 = Surfel(position=(0, 0, 1), normal=(0, 0, 1), color=(10, 20, 30),
                weight=1.0, radius=0.015625, t_init=5, t_current=9)
    s2 = Surfel(position=(1, 2, 3), normal=(0, 0, 0), color=(0, 0, 255),
                weight=2.0, radius=0.03125, t_init=1, t_current=1)
    cloud = SurfelCloud.from_surfels([s1, s2])
    assert len(cloud) == 2
    assert cloud.surfel(0) == s1
    assert cloud.surfel(1) == s2
    with pytest.raises(ValueError):
        cloud.positions[0, 0] = 99.0
    with pytest.raises(AttributeError):
        cloud.positions = np.zeros((2, 3))


def test_surfel_cloud_take_and_concat_and_equals():
    rng = np.random.default_rng(2)
    from conftest import random_cloud

    cloud = random_cloud(rng, 50)
    sub = cloud.take([4, 10, 4])
    assert len(sub) == 3
    assert np.array_equal(sub.positions[0], cloud.positions[4])
    assert np.array_equal(sub.positions[2], cloud.positions[4])

    both = SurfelCloud.concatenate([cloud, sub])
    assert len(both) == 53
    assert both.take(range(50)).equals(cloud)
    assert not both.equals(cloud)
    assert cloud.equals(cloud.take(range(50)))


def test_gaze_state_validation():
    with pytest.raises(ValueError):
        GazeState(direction=(0.0, 0.0, 2.0))
    with pytest.raises(ValueError):
        GazeState(hmd_orientation=(1.0, 1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        GazeState(seq=-1)
    g = GazeState()
    assert g.direction == (0.0, 0.0, 1.0)


def test_foveation_model_validation():
    with pytest.raises(ValueError):
        FoveationModel(bands=())
    with pytest.raises(ValueError):
        FoveationModel(bands=((30.0, 0.0), (10.0, 0.02), (180.0, 0.08)))  # not increasing
    with pytest.raises(ValueError):
        FoveationModel(bands=((10.0, 0.0), (90.0, 0.02)))  # last band short of 180
    with pytest.raises(ValueError):
        FoveationModel(bands=((10.0, 0.05), (180.0, 0.02)))  # leaf sizes decrease
    model = FoveationModel(bands=((10.0, 0.0), (180.0, 0.08)))
    assert model.leaf_size(0) == 0.0
    assert model.leaf_size(1) == 0.08


def test_object_map_validation():
    cloud = SurfelCloud.empty()
    with pytest.raises(ValueError):
        ObjectMap(object_id=1, class_id=101, confidence=50, bbox=(0, 0, 1, 1), surfels=cloud)
    with pytest.raises(ValueError):
        ObjectMap(object_id=1, class_id=5, confidence=-1, bbox=(0, 0, 1, 1), surfels=cloud)
    with pytest.raises(ValueError):
        ObjectMap(object_id=1, class_id=5, confidence=50, bbox=(5, 0, 1, 1), surfels=cloud)
    m = ObjectMap(object_id=65535, class_id=0, confidence=0, bbox=(0, 0, 1, 1), surfels=cloud)
    assert m.is_background
