"""Framed streaming transport: server pipeline, headless client, gaze uplink.

Downlink (server to client) carries ChannelFrames::

    "FPK1"  u32 length  <length bytes of FramePacket>

Uplink (client to server) carries fixed 68-byte GazeMessages::

    "GAZ1"  u32 seq  u64 timestamp_us  3*f32 origin  3*f32 direction
    3*f32 hmd_position  4*f32 hmd_orientation

Both little-endian.  The same bytes ride the WebSocket port, one message per
WebSocket binary frame, so the browser viewer shares the exact parser.

One session per client.  Within a session the pipeline thread produces whole
frames (load, detect, project, partition, sample, encode against a single
gaze snapshot), a sender thread drains a bounded queue of at most
``send_queue_frames`` frames (a slow client costs dropped frames, never
unbounded memory, never a partial frame), and an uplink thread applies gaze
updates newest-wins by sequence number.
"""

from __future__ import annotations

import bisect
import csv
import logging
import math
import queue
import socket
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Protocol

from . import ws
from .codec import (
    FramePacket,
    MalformedPacketError,
    PacketTooLargeError,
    StageLedger,
    decode,
    encode,
)
from .config import DEFAULT_PORT, DEFAULT_WS_PORT, default_model
from .core import FoveationModel, GazeState, now_us
from .foveation import RegionBucket, StreamCondition, apply_condition, partition, sample
from .ingest import RgbdDataset, load_frame, project

log = logging.getLogger(__name__)

FRAME_MAGIC = b"FPK1"
GAZE_MAGIC = b"GAZ1"
FRAME_HEADER_STRUCT = struct.Struct("<4sI")
GAZE_STRUCT = struct.Struct("<4sIQ3f3f3f4f")
GAZE_MESSAGE_SIZE = GAZE_STRUCT.size  # 68
MAX_FRAME_BYTES = 64 * 2**20
DIRECTION_TOLERANCE = 1e-3


class MalformedGazeError(ValueError):
    """Gaze message bytes violate the fixed wire layout."""


def frame_bytes(packet_bytes: bytes) -> bytes:
    """Wrap serialized packet bytes in the channel framing."""
    if len(packet_bytes) > MAX_FRAME_BYTES:
        raise PacketTooLargeError(f"{len(packet_bytes)} bytes exceed the 64 MiB frame cap")
    return FRAME_HEADER_STRUCT.pack(FRAME_MAGIC, len(packet_bytes)) + packet_bytes


def pack_gaze(gaze: GazeState) -> bytes:
    return GAZE_STRUCT.pack(
        GAZE_MAGIC,
        gaze.seq,
        gaze.timestamp,
        *gaze.origin,
        *gaze.direction,
        *gaze.hmd_position,
        *gaze.hmd_orientation,
    )


def _renormalize(vec: tuple[float, ...], name: str) -> tuple[float, ...]:
    norm = math.sqrt(sum(c * c for c in vec))
    # written so a NaN norm fails the check instead of sliding past it
    if not abs(norm - 1.0) <= DIRECTION_TOLERANCE:
        raise MalformedGazeError(f"{name} norm {norm:.6f} deviates more than {DIRECTION_TOLERANCE}")
    return tuple(c / norm for c in vec)


def unpack_gaze(data: bytes) -> GazeState:
    if len(data) != GAZE_MESSAGE_SIZE:
        raise MalformedGazeError(f"gaze message must be {GAZE_MESSAGE_SIZE} bytes, got {len(data)}")
    fields = GAZE_STRUCT.unpack(data)
    if fields[0] != GAZE_MAGIC:
        raise MalformedGazeError(f"bad gaze magic {fields[0]!r}")
    return GazeState(
        origin=fields[3:6],
        direction=_renormalize(fields[6:9], "direction"),
        hmd_position=fields[9:12],
        hmd_orientation=_renormalize(fields[12:16], "hmd_orientation"),
        seq=fields[1],
        timestamp=fields[2],
    )


class FrameScanner:
    """Incremental ChannelFrame parser that resynchronizes on garbage.

    Feed raw bytes; complete packet bodies come out.  A bad magic or an
    implausible length advances the scan to the next "FPK1" and bumps the
    resync counter; the stream itself survives.
    """

    def __init__(self):
        self._buf = bytearray()
        self.resyncs = 0
        self.discarded_bytes = 0

    def feed(self, data: bytes) -> list[bytes]:
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < FRAME_HEADER_STRUCT.size:
                break
            if self._buf[:4] != FRAME_MAGIC:
                self._resync()
                continue
            (_, length) = FRAME_HEADER_STRUCT.unpack_from(self._buf, 0)
            if length > MAX_FRAME_BYTES:
                self._resync()
                continue
            end = FRAME_HEADER_STRUCT.size + length
            if len(self._buf) < end:
                break
            out.append(bytes(self._buf[FRAME_HEADER_STRUCT.size : end]))
            del self._buf[:end]
        return out

    def _resync(self) -> None:
        self.resyncs += 1
        idx = self._buf.find(FRAME_MAGIC, 1)
        if idx == -1:
            self.discarded_bytes += max(0, len(self._buf) - 3)
            del self._buf[: max(0, len(self._buf) - 3)]
        else:
            self.discarded_bytes += idx
            del self._buf[:idx]

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)


class GazeScanner:
    """Fixed-size record parser for the uplink, same resync discipline."""

    def __init__(self):
        self._buf = bytearray()
        self.resyncs = 0

    def feed(self, data: bytes) -> list[bytes]:
        self._buf.extend(data)
        out = []
        while len(self._buf) >= GAZE_MESSAGE_SIZE:
            if self._buf[:4] != GAZE_MAGIC:
                self.resyncs += 1
                idx = self._buf.find(GAZE_MAGIC, 1)
                if idx == -1:
                    del self._buf[: len(self._buf) - 3]
                    break
                del self._buf[:idx]
                continue
            out.append(bytes(self._buf[:GAZE_MESSAGE_SIZE]))
            del self._buf[:GAZE_MESSAGE_SIZE]
        return out


# --- gaze sources -----------------------------------------------------------


class GazeSource(Protocol):
    def current(self) -> GazeState:
        ...


class StaticGaze:
    def __init__(self, gaze: GazeState | None = None):
        self._gaze = gaze if gaze is not None else GazeState()

    def current(self) -> GazeState:
        return self._gaze


class TraceGaze:
    """Wall-clock replay of a gaze trace; holds the last entry once done."""

    def __init__(self, entries: list[tuple[int, GazeState]]):
        if not entries:
            raise ValueError("gaze trace is empty")
        self._times = [t for t, _ in entries]
        self._states = [g for _, g in entries]
        self._t0 = time.monotonic()

    def current(self) -> GazeState:
        elapsed_us = int((time.monotonic() - self._t0) * 1e6)
        idx = bisect.bisect_right(self._times, elapsed_us) - 1
        return self._states[max(idx, 0)]


TRACE_COLUMNS = ["t_us", "ox", "oy", "oz", "dx", "dy", "dz", "hx", "hy", "hz", "qx", "qy", "qz", "qw"]


def load_gaze_trace(path: Path | str) -> list[tuple[int, GazeState]]:
    """Read a gaze trace CSV (columns t_us, origin, direction, hmd pose)."""
    entries: list[tuple[int, GazeState]] = []
    with open(path, newline="") as f:
        reader = csv.reader(row for row in f if not row.startswith("#"))
        header_skipped = False
        for row in reader:
            if not row:
                continue
            if not header_skipped and row[0].strip() == "t_us":
                header_skipped = True
                continue
            values = [float(v) for v in row]
            if len(values) != len(TRACE_COLUMNS):
                raise ValueError(f"gaze trace rows need {len(TRACE_COLUMNS)} columns, got {len(values)}")
            t_us = int(values[0])
            direction = tuple(values[4:7])
            norm = math.sqrt(sum(c * c for c in direction))
            if norm == 0:
                raise ValueError("gaze trace direction must be non-zero")
            entries.append(
                (
                    t_us,
                    GazeState(
                        origin=tuple(values[1:4]),
                        direction=tuple(c / norm for c in direction),
                        hmd_position=tuple(values[7:10]),
                        hmd_orientation=_renormalize(tuple(values[10:14]), "hmd_orientation"),
                        seq=0,
                        timestamp=t_us,
                    ),
                )
            )
    entries.sort(key=lambda e: e[0])
    return entries


def save_gaze_trace(path: Path | str, entries: Iterable[tuple[int, GazeState]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for t_us, g in entries:
            writer.writerow(
                [t_us, *g.origin, *g.direction, *g.hmd_position, *g.hmd_orientation]
            )


# --- server ----------------------------------------------------------------


@dataclass
class ServerConfig:
    dataset: Path | str
    condition: StreamCondition = StreamCondition.SEMA_FOV
    model: FoveationModel = field(default_factory=default_model)
    fps: float = 30.0
    frame_count: int | None = None  # None = cycle the dataset until stopped
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT  # 0 = ephemeral
    ws_port: int | None = DEFAULT_WS_PORT  # None disables the browser port
    default_gaze: GazeState = GazeState()
    quantize_positions: bool = True
    link_mbps: float | None = None  # emulated downlink rate; None = unthrottled
    send_queue_frames: int = 3
    gaze_schedule: tuple[tuple[int, GazeState], ...] | None = None
    viewer_dir: Path | None = None
    encode_workers: int = 2


@dataclass
class SessionStats:
    bytes_sent: int = 0
    packets_sent: int = 0
    frames_sent: int = 0
    frames_dropped: int = 0
    frames_produced: int = 0
    gaze_messages: int = 0
    malformed_gaze: int = 0
    surfels_sent: int = 0


class _Session(threading.Thread):
    """One connected client: pipeline + sender + uplink threads."""

    def __init__(self, server: "StreamServer", conn: socket.socket, kind: str):
        super().__init__(daemon=True, name=f"fovstream-session-{kind}")
        self.server = server
        self.config = server.config
        self.conn = conn
        self.kind = kind  # "raw" | "ws"
        self.stats = SessionStats()
        self.reader = ws.SockReader(conn)
        self._gaze = self.config.default_gaze
        self._gaze_lock = threading.Lock()
        self._queue: queue.Queue = queue.Queue(maxsize=self.config.send_queue_frames)
        self._halt = threading.Event()
        self._dead = threading.Event()  # sender failed; stop producing
        self._produced_all = threading.Event()
        self._schedule_times = None
        if self.config.gaze_schedule:
            self._schedule_times = [t for t, _ in self.config.gaze_schedule]

    # gaze ------------------------------------------------------------------

    def apply_gaze(self, gaze: GazeState) -> bool:
        """Install a gaze update; stale (non-increasing seq) ones are dropped."""
        with self._gaze_lock:
            if gaze.seq <= self._gaze.seq and self.stats.gaze_messages > 0:
                return False
            self._gaze = gaze
            self.stats.gaze_messages += 1
            return True

    @property
    def current_gaze_seq(self) -> int:
        with self._gaze_lock:
            return self._gaze.seq

    def _gaze_for_frame(self, index: int) -> GazeState:
        if self._schedule_times is not None:
            if self.config.fps > 0:
                t_us = int(index * 1e6 / self.config.fps)
            else:
                t_us = int(index)
            idx = bisect.bisect_right(self._schedule_times, t_us) - 1
            if idx < 0:
                return self.config.default_gaze
            t, gaze = self.config.gaze_schedule[idx]
            return replace(gaze, seq=idx + 1)
        with self._gaze_lock:
            return self._gaze

    # threads ---------------------------------------------------------------

    def run(self) -> None:
        sender = threading.Thread(target=self._send_loop, daemon=True, name="fovstream-sender")
        uplink = threading.Thread(target=self._uplink_loop, daemon=True, name="fovstream-uplink")
        sender.start()
        uplink.start()
        try:
            self._pipeline_loop()
        except Exception:
            log.exception("session pipeline failed")
        finally:
            self._produced_all.set()
            sender.join(timeout=30.0)
            self._halt.set()
            try:
                self.conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.conn.close()
            sender.join(timeout=5.0)  # closing unsticks a send stalled on a dead peer
            uplink.join(timeout=5.0)
            self.server._session_done(self)

    def stop(self) -> None:
        self._halt.set()
        self._dead.set()

    def _uplink_loop(self) -> None:
        scanner = GazeScanner()
        try:
            while not self._halt.is_set():
                if self.kind == "ws":
                    message = ws.read_message(self.reader)
                    if message is None:
                        break
                    raw_messages = [message]
                else:
                    chunk = self.conn.recv(65536)
                    if not chunk:
                        break
                    raw_messages = scanner.feed(chunk)
                for raw in raw_messages:
                    try:
                        self.apply_gaze(unpack_gaze(raw))
                    except MalformedGazeError:
                        self.stats.malformed_gaze += 1
        except (OSError, EOFError, ws.WsProtocolError):
            pass

    def _pipeline_loop(self) -> None:
        cfg = self.config
        dataset = self.server.dataset
        ids = dataset.frame_ids
        total = cfg.frame_count
        period = 1.0 / cfg.fps if cfg.fps > 0 else 0.0
        executor = ThreadPoolExecutor(max_workers=max(1, cfg.encode_workers))
        next_deadline = time.monotonic()
        index = 0
        try:
            while total is None or index < total:
                if self._halt.is_set() or self._dead.is_set():
                    break
                if period:
                    now = time.monotonic()
                    if now < next_deadline:
                        time.sleep(next_deadline - now)
                    next_deadline = max(next_deadline + period, now)

                frame_id = ids[index % len(ids)]
                capture_ts = now_us()
                t0 = capture_ts
                color, depth, intr = dataset.load(frame_id)
                t1 = now_us()
                detections = dataset.detector.detect(frame_id, color)
                maps = project(color, depth, intr, detections, capture_ts)
                t2 = now_us()

                gaze = self._gaze_for_frame(index)
                if cfg.condition is StreamCondition.SEMA_FOV:
                    partitioned = [partition(m, gaze, cfg.model) for m in maps if len(m.surfels)]
                    t3 = now_us()
                    buckets: list[RegionBucket] = []
                    for part in partitioned:
                        buckets.extend(sample(part, cfg.model))
                    t4 = now_us()
                else:
                    buckets = apply_condition(maps, gaze, cfg.model, cfg.condition)
                    t3 = t4 = now_us()

                packets = list(
                    executor.map(
                        lambda b: encode(
                            b,
                            frame_id=index,
                            capture_timestamp=capture_ts,
                            quantize_positions=cfg.quantize_positions,
                        ),
                        buckets,
                    )
                )
                t5 = now_us()
                ledger = StageLedger(
                    acquire=t1 - t0,
                    segment=t2 - t1,
                    partition=t3 - t2,
                    sample=t4 - t3,
                    encode=t5 - t4,
                    enqueue=now_us() - t5,
                ).clamped()
                packets = [replace(p, stage_ledger=ledger) for p in packets]

                self.stats.frames_produced += 1
                try:
                    self._queue.put_nowait((index, packets))
                except queue.Full:
                    self.stats.frames_dropped += 1
                index += 1
        finally:
            executor.shutdown(wait=False)

    def _send_loop(self) -> None:
        cfg = self.config
        allowed_at = time.monotonic()
        throttle = cfg.link_mbps
        try:
            while not self._dead.is_set():
                try:
                    _, packets = self._queue.get(timeout=0.05)
                except queue.Empty:
                    if self._produced_all.is_set():
                        break
                    continue
                for packet in packets:
                    data = frame_bytes(packet.to_bytes())
                    if throttle:
                        now = time.monotonic()
                        if now < allowed_at:
                            time.sleep(allowed_at - now)
                        allowed_at = max(allowed_at, now) + len(data) * 8.0 / (throttle * 1e6)
                    if self.kind == "ws":
                        ws.send_binary(self.conn, data)
                    else:
                        self.conn.sendall(data)
                    self.stats.bytes_sent += len(data)
                    self.stats.packets_sent += 1
                    self.stats.surfels_sent += packet.surfel_count
                self.stats.frames_sent += 1
        except OSError:
            self._dead.set()


class StreamServer:
    """Accepts clients on the raw port (and optionally the browser port)."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.dataset = _DatasetHandle(config.dataset)
        self._listeners: list[tuple[socket.socket, str]] = []
        self._threads: list[threading.Thread] = []
        self.sessions: list[_Session] = []
        self.finished_sessions: list[_Session] = []
        self._lock = threading.Lock()
        self._stopping = threading.Event()
        self.port: int | None = None
        self.ws_port: int | None = None

    def start(self) -> "StreamServer":
        self.port = self._listen(self.config.port, "raw")
        if self.config.ws_port is not None:
            self.ws_port = self._listen(self.config.ws_port, "ws")
        return self

    def _listen(self, port: int, kind: str) -> int:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.config.host, port))
        sock.listen(8)
        self._listeners.append((sock, kind))
        thread = threading.Thread(
            target=self._accept_loop, args=(sock, kind), daemon=True, name=f"fovstream-accept-{kind}"
        )
        thread.start()
        self._threads.append(thread)
        return sock.getsockname()[1]

    def _accept_loop(self, listener: socket.socket, kind: str) -> None:
        while not self._stopping.is_set():
            try:
                conn, addr = listener.accept()
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            if kind == "ws":
                session = self._start_ws_session(conn)
            else:
                session = _Session(self, conn, kind)
            if session is None:
                continue
            with self._lock:
                self.sessions.append(session)
            session.start()
            log.info("client %s connected (%s)", addr, kind)

    def _start_ws_session(self, conn: socket.socket) -> _Session | None:
        session = _Session(self, conn, "ws")
        try:
            upgraded = ws.accept_http(session.reader, self.config.viewer_dir)
        except (OSError, EOFError, ws.WsProtocolError):
            conn.close()
            return None
        if not upgraded:
            conn.close()
            return None
        return session

    def _session_done(self, session: _Session) -> None:
        with self._lock:
            if session in self.sessions:
                self.sessions.remove(session)
            self.finished_sessions.append(session)
        log.info("session finished (%d frames sent, %d dropped)",
                 session.stats.frames_sent, session.stats.frames_dropped)

    def stop(self) -> None:
        self._stopping.set()
        for sock, _ in self._listeners:
            try:
                sock.close()
            except OSError:
                pass
        with self._lock:
            active = list(self.sessions)
        for session in active:
            session.stop()
        for session in active:
            session.join(timeout=10.0)

    def __enter__(self) -> "StreamServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


class _DatasetHandle:
    """Shared read-only dataset access for all sessions."""

    def __init__(self, root: Path | str):
        self._dataset = RgbdDataset(root)
        self.frame_ids = self._dataset.frame_ids
        self.detector = self._dataset.detector

    def load(self, frame_id: int):
        return load_frame(self._dataset.root, frame_id)


# --- client ----------------------------------------------------------------


@dataclass
class PacketRecord:
    frame_id: int
    object_id: int
    band: int
    flags: int
    surfel_count: int
    capture_timestamp: int
    stage_ledger: StageLedger
    recv_timestamp: int
    decode_timestamp: int
    wire_bytes: int

    @property
    def end_to_end_us(self) -> int:
        """Capture to decode-complete; needs client and server on one clock."""
        return self.decode_timestamp - self.capture_timestamp


@dataclass
class ClientReport:
    records: list[PacketRecord] = field(default_factory=list)
    bytes_received: int = 0
    malformed_packets: int = 0
    resyncs: int = 0
    clean_disconnect: bool = False
    gaze_sent: int = 0


class StreamClient:
    """Headless receiver: decodes packets, timestamps, sends gaze uplink."""

    def __init__(
        self,
        host: str,
        port: int,
        *,
        gaze_source: GazeSource | None = None,
        gaze_rate_hz: float = 60.0,
        on_bucket: Callable[[FramePacket, RegionBucket], None] | None = None,
    ):
        self.host = host
        self.port = port
        self.gaze_source = gaze_source
        self.gaze_rate_hz = gaze_rate_hz
        self.on_bucket = on_bucket
        self.report = ClientReport()
        self._sock: socket.socket | None = None
        self._stop = threading.Event()

    def run(self) -> ClientReport:
        """Connect, stream until the server closes, return the report."""
        self._sock = socket.create_connection((self.host, self.port))
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        gaze_thread = None
        if self.gaze_source is not None:
            gaze_thread = threading.Thread(target=self._gaze_loop, daemon=True, name="fovstream-gaze")
            gaze_thread.start()
        scanner = FrameScanner()
        try:
            while True:
                chunk = self._sock.recv(1 << 20)
                if not chunk:
                    self.report.clean_disconnect = scanner.pending_bytes == 0
                    break
                recv_ts = now_us()
                self.report.bytes_received += len(chunk)
                for body in scanner.feed(chunk):
                    self._handle_packet(body, recv_ts)
        finally:
            self._stop.set()
            try:
                self._sock.close()
            except OSError:
                pass
            if gaze_thread is not None:
                gaze_thread.join(timeout=2.0)
            self.report.resyncs = scanner.resyncs
        return self.report

    def stop(self) -> None:
        self._stop.set()
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass

    def _handle_packet(self, body: bytes, recv_ts: int) -> None:
        try:
            packet = FramePacket.from_bytes(body)
            bucket = decode(packet)
        except MalformedPacketError:
            self.report.malformed_packets += 1
            return
        decode_ts = now_us()
        self.report.records.append(
            PacketRecord(
                frame_id=packet.frame_id,
                object_id=packet.object_id,
                band=packet.band,
                flags=packet.flags,
                surfel_count=packet.surfel_count,
                capture_timestamp=packet.capture_timestamp,
                stage_ledger=packet.stage_ledger,
                recv_timestamp=recv_ts,
                decode_timestamp=decode_ts,
                wire_bytes=FRAME_HEADER_STRUCT.size + len(body),
            )
        )
        if self.on_bucket is not None:
            self.on_bucket(packet, bucket)

    def _gaze_loop(self) -> None:
        interval = 1.0 / self.gaze_rate_hz if self.gaze_rate_hz > 0 else 0.0
        seq = 0
        while not self._stop.is_set():
            seq += 1
            gaze = replace(self.gaze_source.current(), seq=seq, timestamp=now_us())
            try:
                self._sock.sendall(pack_gaze(gaze))
            except OSError:
                break
            self.report.gaze_sent = seq
            if interval:
                self._stop.wait(interval)
