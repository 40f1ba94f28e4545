"""Loopback benchmark: stream a dataset under each condition and report.

Runs an in-process server and headless client over the loopback interface,
replays a fixed number of frames with a scripted gaze, and aggregates
bandwidth plus per-stage and end-to-end latency into a report shaped like a
dataset-by-condition results table.

Bandwidth is counted at the framing layer (every byte written to the
stream), and the client's byte count is checked against the server's, so the
reported figure is exact rather than sampled.  Latencies compare the capture
timestamp against the client's decode-complete timestamp; both sides run in
one process, hence one clock.
"""

from __future__ import annotations

import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass
from io import StringIO
from pathlib import Path

import numpy as np

from .codec import LEDGER_STAGES
from .core import FoveationModel, GazeState, SurfelCloud
from .foveation import StreamCondition
from .transport import ServerConfig, StreamClient, StreamServer, load_gaze_trace

log = logging.getLogger(__name__)

DEFAULT_FRAME_COUNT = 150
# measurement rate: slow enough that no condition is producer-limited on
# modest hardware; link rate sized so raw streaming saturates it while the
# reduced conditions do not (that contrast is the phenomenon under test)
DEFAULT_BENCH_FPS = 20.0
DEFAULT_LINK_MBPS = 100.0
# table columns in the order the results are conventionally reported
CONDITION_ORDER = (StreamCondition.REF, StreamCondition.SEMA_FOV, StreamCondition.SEMA)


class BenchConfigError(ValueError):
    """Dataset or endpoint problems detected before any measurement."""


@dataclass(frozen=True)
class RunReport:
    dataset: str
    condition: str
    frames_received: int
    frames_produced: int
    frames_dropped: int
    total_surfels: int
    total_bytes: int
    wall_seconds: float
    mean_bandwidth_mbps: float
    latency_ms_mean: float
    latency_ms_median: float
    latency_ms_p95: float
    stage_ms_mean: dict[str, float]
    fps: float
    gaze_trace: str


def run_condition(
    dataset: Path | str,
    condition: StreamCondition,
    *,
    model: FoveationModel,
    fps: float = DEFAULT_BENCH_FPS,
    frames: int = DEFAULT_FRAME_COUNT,
    gaze_entries: list[tuple[int, GazeState]] | None = None,
    gaze_trace_name: str = "",
    default_gaze: GazeState | None = None,
    link_mbps: float | None = DEFAULT_LINK_MBPS,
    quantize_positions: bool = True,
    host: str = "127.0.0.1",
) -> RunReport:
    """Stream `frames` frames under one condition on loopback; measure."""
    root = Path(dataset)
    if not root.is_dir():
        raise BenchConfigError(f"dataset directory not found: {root}")

    config = ServerConfig(
        dataset=root,
        condition=condition,
        model=model,
        fps=fps,
        frame_count=frames,
        host=host,
        port=0,
        ws_port=None,
        default_gaze=default_gaze if default_gaze is not None else GazeState(),
        quantize_positions=quantize_positions,
        link_mbps=link_mbps,
        gaze_schedule=tuple(gaze_entries) if gaze_entries else None,
    )
    try:
        server = StreamServer(config).start()
    except OSError as exc:
        raise BenchConfigError(f"cannot bind benchmark server: {exc}") from exc
    try:
        client = StreamClient(host, server.port)
        report = client.run()
    finally:
        server.stop()

    if not server.finished_sessions:
        raise BenchConfigError("benchmark session never completed")
    stats = server.finished_sessions[0].stats
    if stats.bytes_sent != report.bytes_received:
        raise AssertionError(
            f"byte accounting mismatch: server sent {stats.bytes_sent}, "
            f"client counted {report.bytes_received}"
        )

    return _aggregate(root.name, condition, report, stats, fps, gaze_trace_name)


def _aggregate(dataset_name, condition, report, stats, fps, gaze_trace_name) -> RunReport:
    by_frame: dict[int, list] = {}
    for rec in report.records:
        by_frame.setdefault(rec.frame_id, []).append(rec)

    latencies_ms = []
    stage_sums = dict.fromkeys(LEDGER_STAGES, 0.0)
    for frame_id, recs in by_frame.items():
        done = max(r.decode_timestamp for r in recs)
        latencies_ms.append((done - recs[0].capture_timestamp) / 1e3)
        ledger = recs[0].stage_ledger
        for name in LEDGER_STAGES:
            stage_sums[name] += getattr(ledger, name) / 1e3

    n_frames = max(len(by_frame), 1)
    if report.records:
        first = min(r.recv_timestamp for r in report.records)
        last = max(r.decode_timestamp for r in report.records)
        wall = max((last - first) / 1e6, 1e-6)
    else:
        wall = 1e-6

    return RunReport(
        dataset=dataset_name,
        condition=condition.value,
        frames_received=len(by_frame),
        frames_produced=stats.frames_produced,
        frames_dropped=stats.frames_dropped,
        total_surfels=sum(r.surfel_count for r in report.records),
        total_bytes=report.bytes_received,
        wall_seconds=wall,
        mean_bandwidth_mbps=report.bytes_received * 8.0 / wall / 1e6,
        latency_ms_mean=statistics.fmean(latencies_ms) if latencies_ms else 0.0,
        latency_ms_median=statistics.median(latencies_ms) if latencies_ms else 0.0,
        latency_ms_p95=float(np.percentile(latencies_ms, 95)) if latencies_ms else 0.0,
        stage_ms_mean={k: v / n_frames for k, v in stage_sums.items()},
        fps=fps,
        gaze_trace=gaze_trace_name,
    )


def run_conditions(
    dataset: Path | str,
    conditions: list[StreamCondition],
    *,
    model: FoveationModel,
    gaze_trace: Path | str | None = None,
    **kwargs,
) -> list[RunReport]:
    """Run several conditions back to back with the same gaze script."""
    entries = None
    trace_name = ""
    if gaze_trace is not None:
        entries = load_gaze_trace(gaze_trace)
        trace_name = Path(gaze_trace).name
    reports = []
    for condition in conditions:
        log.info("benchmark: %s on %s", condition.value, dataset)
        reports.append(
            run_condition(
                dataset,
                condition,
                model=model,
                gaze_entries=entries,
                gaze_trace_name=trace_name,
                **kwargs,
            )
        )
    return reports


# --- rendering ---------------------------------------------------------------


def _grid(reports: list[RunReport]) -> dict[str, dict[str, RunReport]]:
    grid: dict[str, dict[str, RunReport]] = {}
    for r in reports:
        grid.setdefault(r.dataset, {})[r.condition] = r
    return grid


def format_table(reports: list[RunReport]) -> str:
    """Dataset-by-condition grid of mean bandwidth and mean latency."""
    grid = _grid(reports)
    conditions = [c.value for c in CONDITION_ORDER if any(r.condition == c.value for r in reports)]
    conditions += sorted({r.condition for r in reports} - set(conditions))

    header = ["Dataset", "Metric"] + [c.upper() for c in conditions]
    rows = [header]
    for dataset in sorted(grid):
        by_cond = grid[dataset]
        rows.append(
            [dataset, "Bandwidth (Mbps)"]
            + [_cell(by_cond.get(c), "mean_bandwidth_mbps") for c in conditions]
        )
        rows.append(
            [dataset, "Latency (ms)"]
            + [_cell(by_cond.get(c), "latency_ms_mean") for c in conditions]
        )

    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    footer = [
        "",
        "frames received/produced/dropped: "
        + ", ".join(
            f"{r.dataset}/{r.condition}: {r.frames_received}/{r.frames_produced}/{r.frames_dropped}"
            for r in reports
        ),
    ]
    return "\n".join(lines + footer) + "\n"


def _cell(report: RunReport | None, attr: str) -> str:
    return f"{getattr(report, attr):.2f}" if report is not None else "-"


def format_csv(reports: list[RunReport]) -> str:
    import csv as _csv

    buf = StringIO()
    fields = [
        "dataset", "condition", "mean_bandwidth_mbps", "latency_ms_mean",
        "latency_ms_median", "latency_ms_p95", "frames_received",
        "frames_produced", "frames_dropped", "total_surfels", "total_bytes",
        "wall_seconds", "fps", "gaze_trace",
    ] + [f"stage_ms_{s}" for s in LEDGER_STAGES]
    writer = _csv.DictWriter(buf, fieldnames=fields)
    writer.writeheader()
    for r in reports:
        row = {k: v for k, v in asdict(r).items() if k != "stage_ms_mean"}
        row.update({f"stage_ms_{s}": r.stage_ms_mean[s] for s in LEDGER_STAGES})
        writer.writerow(row)
    return buf.getvalue()


def format_json(reports: list[RunReport]) -> str:
    return json.dumps([asdict(r) for r in reports], indent=2) + "\n"


def save_report(reports: list[RunReport], path: Path | str) -> None:
    """Write the report; format chosen by extension (.txt, .csv, .json)."""
    path = Path(path)
    renderers = {".txt": format_table, ".csv": format_csv, ".json": format_json}
    if path.suffix not in renderers:
        raise ValueError(f"unsupported report extension {path.suffix!r} (use .txt/.csv/.json)")
    path.write_text(renderers[path.suffix](reports))


def write_ply(cloud: SurfelCloud, path: Path | str) -> None:
    """Dump a surfel cloud as ASCII PLY for eyeballing in a point-cloud viewer."""
    with open(path, "w") as f:
        f.write(
            "ply\nformat ascii 1.0\n"
            f"element vertex {len(cloud)}\n"
            "property float x\nproperty float y\nproperty float z\n"
            "property uchar red\nproperty uchar green\nproperty uchar blue\n"
            "property float radius\n"
            "end_header\n"
        )
        for p, c, r in zip(cloud.positions, cloud.colors, cloud.radii):
            f.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {c[0]} {c[1]} {c[2]} {r:.6f}\n")
