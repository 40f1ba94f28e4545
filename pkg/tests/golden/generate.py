"""Regenerate the golden wire-format files.

Each case is one channel frame ("FPK1" magic + u32 length + packet bytes)
written to a .bin file, with the expected header fields and decoded arrays
recorded in manifest.json.  Any decoder -- the Python one under test or the
browser viewer's -- must reproduce the manifest from the bytes alone.

Run from the repository root::

    python3 tests/golden/generate.py

Regeneration is deterministic; a diff against the committed files means the
wire format changed and every consumer needs a second look.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from fovstream.codec import StageLedger, decode, encode
from fovstream.core import SurfelCloud
from fovstream.foveation import RegionBucket
from fovstream.transport import frame_bytes

GOLDEN_DIR = Path(__file__).resolve().parent


def _cloud(positions, colors=None, radii=None, normals=None) -> SurfelCloud:
    return SurfelCloud(
        positions=np.asarray(positions, dtype=np.float64),
        colors=None if colors is None else np.asarray(colors, dtype=np.uint8),
        radii=None if radii is None else np.asarray(radii, dtype=np.float32),
        normals=None if normals is None else np.asarray(normals, dtype=np.float32),
    )


def build_cases() -> list[dict]:
    """Return [{name, packet}] in a fixed order."""
    cases = []

    positions = [
        [-0.5, -0.25, 1.0],
        [0.0, 0.0, 2.0],
        [0.5, 0.25, 3.0],
        [0.25, -0.125, 1.5],
        [-0.25, 0.125, 2.5],
    ]
    s = 1.0 / math.sqrt(3.0)
    normals = [
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [s, s, s],
        [0.0, 0.0, -1.0],
    ]
    colors = [[255, 0, 0], [0, 255, 0], [0, 0, 255], [128, 128, 128], [10, 200, 30]]
    radii = [0.005, 0.01, 0.0001, 0.02, 0.0153]
    cases.append(
        {
            "name": "quantized_normals_highlighted",
            "packet": encode(
                RegionBucket(object_id=7, band=1,
                             surfels=_cloud(positions, colors, radii, normals),
                             highlighted=True),
                frame_id=42,
                capture_timestamp=1_700_000_123_456,
                ledger=StageLedger(acquire=900, segment=2100, partition=350,
                                   sample=480, encode=700, enqueue=15),
            ),
        }
    )

    cases.append(
        {
            "name": "background_band2_plain",
            "packet": encode(
                RegionBucket(
                    object_id=0xFFFF, band=2,
                    surfels=_cloud([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [-1.0, -2.0, 9.5]],
                                   colors=[[1, 2, 3], [4, 5, 6], [7, 8, 9]],
                                   radii=[0.001, 0.002, 0.003]),
                    highlighted=False),
                frame_id=0,
                capture_timestamp=0,
            ),
        }
    )

    cases.append(
        {
            "name": "raw_float_positions",
            "packet": encode(
                RegionBucket(
                    object_id=3, band=0,
                    surfels=_cloud([[0.125, -0.375, 1.625], [10.5, -7.25, 0.5],
                                    [0.0, 0.0, 0.1], [-3.0, 2.0, 4.75]],
                                   colors=[[9, 9, 9]] * 4,
                                   radii=[0.0042] * 4),
                    highlighted=False),
                frame_id=9,
                capture_timestamp=555_000,
                quantize_positions=False,
            ),
        }
    )

    cases.append(
        {
            "name": "single_surfel_degenerate_aabb",
            "packet": encode(
                RegionBucket(object_id=1, band=0,
                             surfels=_cloud([[0.5, -1.5, 2.5]], colors=[[77, 88, 99]],
                                            radii=[7.5]),  # saturates the radius field
                             highlighted=False),
                frame_id=1,
                capture_timestamp=10,
            ),
        }
    )

    rng = np.random.default_rng(2024)
    n = 64
    pos = np.column_stack(
        (rng.uniform(-4, 4, n), rng.uniform(-2, 2, n), rng.uniform(0.1, 8, n))
    )
    nrm = rng.normal(size=(n, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    cases.append(
        {
            "name": "random_seeded_64",
            "packet": encode(
                RegionBucket(
                    object_id=12, band=2,
                    surfels=_cloud(pos, colors=rng.integers(0, 256, (n, 3)),
                                   radii=rng.uniform(0.0, 0.05, n).astype(np.float32),
                                   normals=nrm),
                    highlighted=False),
                frame_id=123456,
                capture_timestamp=987_654_321,
                ledger=StageLedger(1, 2, 3, 4, 5, 6),
            ),
        }
    )
    return cases


def describe(packet) -> dict:
    bucket = decode(packet)
    cloud = bucket.surfels
    entry = {
        "frame_id": packet.frame_id,
        "object_id": packet.object_id,
        "band": packet.band,
        "flags": packet.flags,
        "highlighted": packet.highlighted,
        "surfel_count": packet.surfel_count,
        "capture_timestamp": packet.capture_timestamp,
        "stage_ledger": dict(zip(
            ("acquire", "segment", "partition", "sample", "encode", "enqueue"),
            packet.stage_ledger.as_tuple(),
        )),
        "aabb_min": [float(v) for v in packet.aabb_min],
        "aabb_max": [float(v) for v in packet.aabb_max],
        "wire_size": packet.wire_size,
        "positions": cloud.positions.tolist(),
        "colors": cloud.colors.tolist(),
        "radii": cloud.radii.astype(float).tolist(),
        "normals": cloud.normals.astype(float).tolist() if cloud.normals_known else None,
    }
    return entry


def main() -> None:
    manifest = {"framing": "FPK1 + u32 little-endian length + packet", "cases": []}
    for case in build_cases():
        name = case["name"]
        framed = frame_bytes(case["packet"].to_bytes())
        (GOLDEN_DIR / f"{name}.bin").write_bytes(framed)
        entry = {"name": name, "file": f"{name}.bin", "framed_size": len(framed)}
        entry.update(describe(case["packet"]))
        manifest["cases"].append(entry)
    with open(GOLDEN_DIR / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"wrote {len(manifest['cases'])} cases to {GOLDEN_DIR}")


if __name__ == "__main__":
    main()
