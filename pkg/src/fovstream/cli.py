"""Command line entry points: bench, serve, client, make-fixture."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import bench as bench_mod
from .config import load_config
from .fixture import GAZE_TRACE_FILE, make_fixture
from .foveation import StreamCondition
from .transport import (
    ServerConfig,
    StaticGaze,
    StreamClient,
    StreamServer,
    TraceGaze,
    load_gaze_trace,
)

log = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _conditions(text: str) -> list[StreamCondition]:
    if text == "all":
        return list(bench_mod.CONDITION_ORDER)
    return [StreamCondition.parse(text)]


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    gaze_trace = args.gaze
    if gaze_trace is None:
        candidate = args.dataset / GAZE_TRACE_FILE
        gaze_trace = candidate if candidate.is_file() else None
    # flag beats config file beats benchmark default
    if args.fps is not None:
        fps = args.fps
    else:
        fps = cfg.fps if args.config is not None else bench_mod.DEFAULT_BENCH_FPS
    if args.link_mbps is not None:
        link_mbps = args.link_mbps
    else:
        link_mbps = cfg.link_mbps if args.config is not None else bench_mod.DEFAULT_LINK_MBPS
    reports = bench_mod.run_conditions(
        args.dataset,
        _conditions(args.condition),
        model=cfg.model,
        gaze_trace=gaze_trace,
        fps=fps,
        frames=args.frames,
        default_gaze=cfg.default_gaze,
        link_mbps=link_mbps,
        quantize_positions=cfg.quantize_positions,
    )
    print(bench_mod.format_table(reports), end="")
    if args.out is not None:
        bench_mod.save_report(reports, args.out)
        print(f"report written to {args.out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    config = ServerConfig(
        dataset=args.dataset,
        condition=StreamCondition.parse(args.condition),
        model=cfg.model,
        fps=args.fps if args.fps is not None else cfg.fps,
        frame_count=args.frames,
        host=args.host,
        port=args.port if args.port is not None else cfg.port,
        ws_port=args.ws_port if args.ws_port is not None else cfg.ws_port,
        default_gaze=cfg.default_gaze,
        quantize_positions=cfg.quantize_positions,
        link_mbps=args.link_mbps if args.link_mbps is not None else cfg.link_mbps,
        viewer_dir=args.viewer_dir,
    )
    server = StreamServer(config).start()
    print(f"serving {args.dataset} ({config.condition.value}) on port {server.port}", flush=True)
    if server.ws_port is not None:
        print(f"browser endpoint on port {server.ws_port}", flush=True)
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        print("stopping")
    finally:
        server.stop()
    return 0


def cmd_client(args: argparse.Namespace) -> int:
    if args.gaze is not None:
        gaze_source = TraceGaze(load_gaze_trace(args.gaze))
    else:
        gaze_source = StaticGaze()
    client = StreamClient(args.host, args.port, gaze_source=gaze_source)
    report = client.run()
    frames = {r.frame_id for r in report.records}
    print(
        f"received {len(report.records)} packets over {len(frames)} frames, "
        f"{report.bytes_received} bytes, {report.malformed_packets} malformed, "
        f"{report.resyncs} resyncs, clean={report.clean_disconnect}"
    )
    if report.records:
        latency = [r.end_to_end_us / 1e3 for r in report.records]
        print(f"end-to-end latency (same-host clocks): mean {sum(latency) / len(latency):.2f} ms")
    return 0


def cmd_make_fixture(args: argparse.Namespace) -> int:
    root = make_fixture(args.out, frames=args.frames, include_objects=not args.no_objects)
    print(f"fixture dataset written to {root}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fovstream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="measure bandwidth/latency per condition on loopback")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--condition", default="all", help="ref|sema|sema-fov|all")
    p.add_argument("--gaze", type=Path, default=None, help="gaze trace CSV (default: dataset's)")
    p.add_argument("--out", type=Path, default=None, help="report file (.txt/.csv/.json)")
    p.add_argument("--frames", type=int, default=bench_mod.DEFAULT_FRAME_COUNT)
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--link-mbps", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="stream a dataset to connecting clients")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--condition", default="sema-fov")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--ws-port", type=int, default=None)
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--frames", type=int, default=None, help="stop after N frames (default: loop forever)")
    p.add_argument("--link-mbps", type=float, default=None)
    p.add_argument("--viewer-dir", type=Path, default=None, help="static files for the browser viewer")
    _add_common(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("client", help="headless receive/decode client")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7070)
    p.add_argument("--gaze", type=Path, default=None, help="gaze trace CSV to replay")
    _add_common(p)
    p.set_defaults(func=cmd_client)

    p = sub.add_parser("make-fixture", help="generate the synthetic fixture dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--frames", type=int, default=24)
    p.add_argument("--no-objects", action="store_true", help="background-only variant")
    _add_common(p)
    p.set_defaults(func=cmd_make_fixture)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
