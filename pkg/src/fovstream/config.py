"""JSON run configuration: band table, highlights, rates, ports, toggles.

All tunables that the streaming experiments vary live here rather than as
code constants, so a run is reproducible from its config file alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import FoveationModel, GazeState

DEFAULT_BANDS: tuple[tuple[float, float], ...] = ((10.0, 0.0), (30.0, 0.02), (180.0, 0.08))
DEFAULT_FPS = 30.0
DEFAULT_PORT = 7070
DEFAULT_WS_PORT = 7071


def default_model() -> FoveationModel:
    return FoveationModel(bands=DEFAULT_BANDS)


@dataclass(frozen=True)
class RunConfig:
    """Parsed run configuration with defaults filled in."""

    model: FoveationModel = field(default_factory=default_model)
    fps: float = DEFAULT_FPS
    port: int = DEFAULT_PORT
    ws_port: int | None = DEFAULT_WS_PORT
    quantize_positions: bool = True
    default_gaze: GazeState = field(default_factory=GazeState)
    link_mbps: float | None = None

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if not 0 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")
        if self.ws_port is not None and not 0 <= self.ws_port <= 65535:
            raise ValueError(f"ws_port out of range: {self.ws_port}")
        if self.link_mbps is not None and self.link_mbps <= 0:
            raise ValueError("link_mbps must be positive when set")


def _gaze_from_dict(raw: dict) -> GazeState:
    return GazeState(
        origin=tuple(raw.get("origin", (0.0, 0.0, 0.0))),
        direction=tuple(raw.get("direction", (0.0, 0.0, 1.0))),
        hmd_position=tuple(raw.get("hmd_position", (0.0, 0.0, 0.0))),
        hmd_orientation=tuple(raw.get("hmd_orientation", (0.0, 0.0, 0.0, 1.0))),
    )


_KNOWN_KEYS = {
    "bands",
    "highlight_classes",
    "fps",
    "port",
    "ws_port",
    "quantize_positions",
    "default_gaze",
    "link_mbps",
}


def parse_config(raw: dict) -> RunConfig:
    """Build a RunConfig from a decoded JSON object; unknown keys are rejected."""
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    bands = raw.get("bands", DEFAULT_BANDS)
    model = FoveationModel(
        bands=tuple((float(e), float(l)) for e, l in bands),
        highlight_classes=frozenset(int(c) for c in raw.get("highlight_classes", ())),
    )
    ws_port = raw.get("ws_port", DEFAULT_WS_PORT)
    return RunConfig(
        model=model,
        fps=float(raw.get("fps", DEFAULT_FPS)),
        port=int(raw.get("port", DEFAULT_PORT)),
        ws_port=None if ws_port is None else int(ws_port),
        quantize_positions=bool(raw.get("quantize_positions", True)),
        default_gaze=_gaze_from_dict(raw.get("default_gaze", {})),
        link_mbps=None if raw.get("link_mbps") is None else float(raw["link_mbps"]),
    )


def load_config(path: Path | str | None) -> RunConfig:
    """Read a config file; a missing path means all defaults."""
    if path is None:
        return RunConfig()
    with open(path) as f:
        return parse_config(json.load(f))


def save_config(config: RunConfig, path: Path | str) -> None:
    raw = {
        "bands": [list(b) for b in config.model.bands],
        "highlight_classes": sorted(config.model.highlight_classes),
        "fps": config.fps,
        "port": config.port,
        "ws_port": config.ws_port,
        "quantize_positions": config.quantize_positions,
        "default_gaze": {
            "origin": list(config.default_gaze.origin),
            "direction": list(config.default_gaze.direction),
            "hmd_position": list(config.default_gaze.hmd_position),
            "hmd_orientation": list(config.default_gaze.hmd_orientation),
        },
        "link_mbps": config.link_mbps,
    }
    with open(path, "w") as f:
        json.dump(raw, f, indent=2)
        f.write("\n")
