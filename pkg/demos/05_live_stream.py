"""
A live gaze-contingent session over loopback
============================================

Starts the streaming server in-process, connects a client that replays the
recorded gaze sweep upstream at 60 Hz, and watches the per-frame surfel
counts track the gaze.  This is the same wiring the `fovstream serve` and
`fovstream client` commands use.

    python3 demos/05_live_stream.py
"""

from collections import Counter
from pathlib import Path

from fovstream import ServerConfig, StreamClient, StreamServer, TraceGaze, load_gaze_trace
from fovstream.config import default_model
from fovstream.fixture import make_fixture
from fovstream.foveation import StreamCondition

root = Path(__file__).parent / "_fixture"
if not (root / "intrinsics.json").exists():
    print(f"rendering synthetic scene into {root} ...")
    make_fixture(root)

# ---------------------------------------------------------------------------
# Port 0 lets the OS pick a free port; frame_count ends the stream after 40
# frames so the demo terminates on its own.  ws_port=None skips the browser
# endpoint -- demo 04 of the viewer covers that side.
# ---------------------------------------------------------------------------

config = ServerConfig(
    dataset=root,
    model=default_model(),
    condition=StreamCondition.SEMA_FOV,
    fps=20.0,
    frame_count=40,
    port=0,
    ws_port=None,
    host="127.0.0.1",
)

with StreamServer(config).start() as server:
    print(f"server listening on 127.0.0.1:{server.port}")

    gaze = TraceGaze(load_gaze_trace(root / "gaze_sweep.csv"))
    client = StreamClient("127.0.0.1", server.port, gaze_source=gaze, gaze_rate_hz=60.0)
    report = client.run()

# ---------------------------------------------------------------------------
# The client report collects one record per packet; group them by frame to
# see the density breathe as the gaze sweeps on and off the objects.
# ---------------------------------------------------------------------------

per_frame = Counter()
for rec in report.records:
    per_frame[rec.frame_id] += rec.surfel_count

print(f"\nreceived {len(per_frame)} frames, {len(report.records)} packets, "
      f"{report.bytes_received} bytes, clean={report.clean_disconnect}")
print(f"gaze messages sent upstream: {report.gaze_sent}")

lo, hi = min(per_frame.values()), max(per_frame.values())
print(f"\nper-frame surfel count (min {lo}, max {hi}):")
for frame_id in sorted(per_frame)[::4]:
    n = per_frame[frame_id]
    bar = "#" * int(50 * n / hi)
    print(f"  frame {frame_id:3d}  {n:7d}  {bar}")

latencies = sorted(r.end_to_end_us for r in report.records)
print(f"\nend-to-end latency: median {latencies[len(latencies) // 2] / 1000:.1f} ms, "
      f"p95 {latencies[int(len(latencies) * 0.95)] / 1000:.1f} ms")
