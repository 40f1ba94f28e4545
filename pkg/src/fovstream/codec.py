"""Quantizing codec between RegionBuckets and framed binary packets.

Packet layout (little-endian throughout)::

    fixed header, 44 bytes
        u32  frame_id
        u16  object_id          65535 = background
        u8   band
        u8   flags              bit0 highlighted, bit1 positions quantized,
                                bit2 normals present (bits 3..7 must be 0)
        u32  surfel_count
        u64  capture_timestamp  microseconds
        6*u32 stage ledger      acquire, segment, partition, sample,
                                encode, enqueue (microsecond durations)
    AABB, 24 bytes
        3*f32 min, 3*f32 max    metres, min <= max per axis
    payload, surfel_count records, densely packed in input order
        positions   3*u16 quantized against the AABB, or 3*f32 raw
        color       3*u8
        radius      u16 in 0.1 mm units, saturating
        normal      2*u8 octahedral, only when flag bit2 is set

Positions quantize per axis as ``q = round((x - min) / (max - min) * 65535)``;
a degenerate axis (max == min) encodes q = 0 and decodes back to min.  No
entropy coding: encode latency stays deterministic.

The full byte layout, including the transport framing that prefixes packets
with the "FPK1" magic, is documented in docs/wire-format.md and pinned by
golden files under tests/golden/.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SurfelCloud
from .foveation import RegionBucket

log = logging.getLogger(__name__)

HEADER_STRUCT = struct.Struct("<IHBBIQ6I")
AABB_STRUCT = struct.Struct("<6f")
FIXED_HEADER_SIZE = HEADER_STRUCT.size  # 44
AABB_SIZE = AABB_STRUCT.size  # 24
MIN_PACKET_SIZE = FIXED_HEADER_SIZE + AABB_SIZE

FLAG_HIGHLIGHTED = 0x01
FLAG_POSITIONS_QUANTIZED = 0x02
FLAG_NORMALS_PRESENT = 0x04
_KNOWN_FLAGS = FLAG_HIGHLIGHTED | FLAG_POSITIONS_QUANTIZED | FLAG_NORMALS_PRESENT

RADIUS_UNIT = 1e-4  # metres per radius quantum (0.1 mm)
LEDGER_SANITY_US = 10**7  # no single stage may claim 10 s or more
LEDGER_STAGES = ("acquire", "segment", "partition", "sample", "encode", "enqueue")
MAX_SURFELS = 0xFFFFFFFF


class MalformedPacketError(ValueError):
    """Packet bytes violate the wire format; drop the packet, keep the stream."""


class TruncatedPacketError(MalformedPacketError):
    """Fewer bytes than the fixed header and AABB require."""


class BadMagicError(MalformedPacketError):
    """Framing magic did not match (raised by the transport scanner)."""


class PacketCountMismatchError(MalformedPacketError):
    """surfel_count disagrees with the payload length."""


class PacketTooLargeError(MalformedPacketError):
    """Framed length exceeds the 64 MiB cap."""


@dataclass(frozen=True)
class StageLedger:
    """Per-frame pipeline stage durations in microseconds."""

    acquire: int = 0
    segment: int = 0
    partition: int = 0
    sample: int = 0
    encode: int = 0
    enqueue: int = 0

    def as_tuple(self) -> tuple[int, int, int, int, int, int]:
        return (self.acquire, self.segment, self.partition, self.sample, self.encode, self.enqueue)

    def clamped(self) -> "StageLedger":
        values = []
        for name, v in zip(LEDGER_STAGES, self.as_tuple()):
            v = int(v)
            if v < 0:
                v = 0
            if v >= LEDGER_SANITY_US:
                log.debug("ledger stage %s=%dus exceeds sanity bound; clamping", name, v)
                v = LEDGER_SANITY_US - 1
            values.append(v)
        return StageLedger(*values)

    @classmethod
    def from_tuple(cls, values: Sequence[int]) -> "StageLedger":
        return cls(*(int(v) for v in values))


def record_size(flags: int) -> int:
    size = (6 if flags & FLAG_POSITIONS_QUANTIZED else 12) + 3 + 2
    if flags & FLAG_NORMALS_PRESENT:
        size += 2
    return size


def _record_dtype(flags: int) -> np.dtype:
    fields = [
        ("pos", "<u2" if flags & FLAG_POSITIONS_QUANTIZED else "<f4", (3,)),
        ("color", "u1", (3,)),
        ("radius", "<u2"),
    ]
    if flags & FLAG_NORMALS_PRESENT:
        fields.append(("normal", "u1", (2,)))
    return np.dtype(fields)


@dataclass(frozen=True, eq=False)
class FramePacket:
    """Wire unit: one object's one band for one frame."""

    frame_id: int
    object_id: int
    band: int
    flags: int
    surfel_count: int
    aabb_min: tuple[float, float, float]
    aabb_max: tuple[float, float, float]
    capture_timestamp: int
    stage_ledger: StageLedger
    payload: bytes

    @property
    def highlighted(self) -> bool:
        return bool(self.flags & FLAG_HIGHLIGHTED)

    @property
    def positions_quantized(self) -> bool:
        return bool(self.flags & FLAG_POSITIONS_QUANTIZED)

    @property
    def normals_present(self) -> bool:
        return bool(self.flags & FLAG_NORMALS_PRESENT)

    @property
    def wire_size(self) -> int:
        return MIN_PACKET_SIZE + len(self.payload)

    def to_bytes(self) -> bytes:
        header = HEADER_STRUCT.pack(
            self.frame_id,
            self.object_id,
            self.band,
            self.flags,
            self.surfel_count,
            self.capture_timestamp,
            *self.stage_ledger.as_tuple(),
        )
        aabb = AABB_STRUCT.pack(*self.aabb_min, *self.aabb_max)
        return header + aabb + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "FramePacket":
        if len(data) < MIN_PACKET_SIZE:
            raise TruncatedPacketError(
                f"packet is {len(data)} bytes; the header and AABB need {MIN_PACKET_SIZE}"
            )
        try:
            (frame_id, object_id, band, flags, count, capture_ts, *ledger) = HEADER_STRUCT.unpack_from(data, 0)
            aabb = AABB_STRUCT.unpack_from(data, FIXED_HEADER_SIZE)
        except struct.error as exc:  # pragma: no cover - lengths checked above
            raise TruncatedPacketError(str(exc)) from exc
        if flags & ~_KNOWN_FLAGS:
            raise MalformedPacketError(f"unknown flag bits 0x{flags:02x}")
        if any(v >= LEDGER_SANITY_US for v in ledger):
            raise MalformedPacketError("stage ledger entry exceeds the 10^7 us sanity bound")
        aabb_min, aabb_max = aabb[:3], aabb[3:]
        if not all(np.isfinite(aabb)):
            raise MalformedPacketError("AABB must be finite")
        if any(lo > hi for lo, hi in zip(aabb_min, aabb_max)):
            raise MalformedPacketError("AABB min must be <= max per axis")
        payload = data[MIN_PACKET_SIZE:]
        expected = count * record_size(flags)
        if len(payload) != expected:
            raise PacketCountMismatchError(
                f"surfel_count {count} implies {expected} payload bytes, got {len(payload)}"
            )
        return cls(
            frame_id=frame_id,
            object_id=object_id,
            band=band,
            flags=flags,
            surfel_count=count,
            aabb_min=aabb_min,
            aabb_max=aabb_max,
            capture_timestamp=capture_ts,
            stage_ledger=StageLedger.from_tuple(ledger),
            payload=payload,
        )


def _f32_bounds(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """AABB as float32, widened one ulp where rounding pulled it inside."""
    lo64 = positions.min(axis=0)
    hi64 = positions.max(axis=0)
    lo = lo64.astype(np.float32)
    hi = hi64.astype(np.float32)
    lo = np.where(lo.astype(np.float64) > lo64, np.nextafter(lo, np.float32(-np.inf)), lo)
    hi = np.where(hi.astype(np.float64) < hi64, np.nextafter(hi, np.float32(np.inf)), hi)
    return lo, hi


def _oct_encode(normals: np.ndarray) -> np.ndarray:
    """Unit normals (N, 3) to octahedral (N, 2) uint8."""
    n = normals.astype(np.float64)
    denom = np.abs(n).sum(axis=1, keepdims=True)
    p = n[:, :2] / denom
    neg = n[:, 2] < 0
    folded_x = (1.0 - np.abs(p[:, 1])) * np.where(p[:, 0] >= 0, 1.0, -1.0)
    folded_y = (1.0 - np.abs(p[:, 0])) * np.where(p[:, 1] >= 0, 1.0, -1.0)
    p[neg, 0] = folded_x[neg]
    p[neg, 1] = folded_y[neg]
    return np.round((p + 1.0) / 2.0 * 255.0).astype(np.uint8)


def _oct_decode(packed: np.ndarray) -> np.ndarray:
    """Octahedral (N, 2) uint8 back to unit normals (N, 3) float32."""
    f = packed.astype(np.float64) / 255.0 * 2.0 - 1.0
    z = 1.0 - np.abs(f[:, 0]) - np.abs(f[:, 1])
    neg = z < 0
    folded_x = (1.0 - np.abs(f[:, 1])) * np.where(f[:, 0] >= 0, 1.0, -1.0)
    folded_y = (1.0 - np.abs(f[:, 0])) * np.where(f[:, 1] >= 0, 1.0, -1.0)
    x = np.where(neg, folded_x, f[:, 0])
    y = np.where(neg, folded_y, f[:, 1])
    n = np.column_stack((x, y, z))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return n.astype(np.float32)


def encode(
    bucket: RegionBucket,
    frame_id: int,
    capture_timestamp: int,
    ledger: StageLedger | None = None,
    *,
    quantize_positions: bool = True,
) -> FramePacket:
    """Serialize a bucket into a FramePacket.

    Deterministic: identical buckets produce bit-identical packets.  Raises
    ValueError on an empty bucket and OverflowError past 2^32 - 1 surfels.
    """
    cloud = bucket.surfels
    n = len(cloud)
    if n == 0:
        raise ValueError("cannot encode an empty bucket")
    if n > MAX_SURFELS:
        raise OverflowError(f"{n} surfels exceed the u32 count field")

    flags = 0
    if bucket.highlighted:
        flags |= FLAG_HIGHLIGHTED
    if quantize_positions:
        flags |= FLAG_POSITIONS_QUANTIZED
    if cloud.normals_known:
        flags |= FLAG_NORMALS_PRESENT

    lo, hi = _f32_bounds(cloud.positions)
    records = np.zeros(n, dtype=_record_dtype(flags))
    if quantize_positions:
        extent = hi.astype(np.float64) - lo.astype(np.float64)
        degenerate = extent == 0.0
        safe = np.where(degenerate, 1.0, extent)
        q = np.round((cloud.positions - lo.astype(np.float64)) / safe * 65535.0)
        q[:, degenerate] = 0.0
        records["pos"] = np.clip(q, 0, 65535).astype(np.uint16)
    else:
        records["pos"] = cloud.positions.astype(np.float32)
    records["color"] = cloud.colors
    records["radius"] = np.clip(
        np.round(cloud.radii.astype(np.float64) / RADIUS_UNIT), 0, 65535
    ).astype(np.uint16)
    if flags & FLAG_NORMALS_PRESENT:
        records["normal"] = _oct_encode(cloud.normals)

    if ledger is None:
        ledger = StageLedger()
    return FramePacket(
        frame_id=int(frame_id),
        object_id=bucket.object_id,
        band=bucket.band,
        flags=flags,
        surfel_count=n,
        aabb_min=tuple(float(v) for v in lo),
        aabb_max=tuple(float(v) for v in hi),
        capture_timestamp=int(capture_timestamp),
        stage_ledger=ledger.clamped(),
        payload=records.tobytes(),
    )


def decode(packet: FramePacket) -> RegionBucket:
    """Rebuild the bucket a packet carries.

    Positions come back within one quantum per axis; colors, counts, and
    order are exact.  Weight is re-synthesized as 1 and both timestamps take
    the capture timestamp (fusion state does not travel on the wire).
    """
    records = np.frombuffer(packet.payload, dtype=_record_dtype(packet.flags))
    if packet.positions_quantized:
        lo = np.array(packet.aabb_min, dtype=np.float64)
        extent = np.array(packet.aabb_max, dtype=np.float64) - lo
        positions = lo + records["pos"].astype(np.float64) / 65535.0 * extent
    else:
        positions = records["pos"].astype(np.float64)
    normals = _oct_decode(records["normal"]) if packet.normals_present else None
    ts = np.full(len(records), packet.capture_timestamp, dtype=np.uint64)
    cloud = SurfelCloud(
        positions=positions,
        normals=normals,
        colors=records["color"],
        radii=records["radius"].astype(np.float32) * np.float32(RADIUS_UNIT),
        t_init=ts,
        t_current=ts,
    )
    return RegionBucket(
        object_id=packet.object_id,
        band=packet.band,
        surfels=cloud,
        highlighted=packet.highlighted,
    )
