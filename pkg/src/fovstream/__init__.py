"""Gaze-contingent foveated point-cloud streaming.

Partitions per-object surfel maps into concentric eccentricity bands around
the viewer's gaze ray, down-samples the periphery on a voxel grid (with a
semantic highlight override), and streams the result as compact binary
packets with a per-stage latency ledger.
"""

from .codec import FramePacket, MalformedPacketError, StageLedger, decode, encode
from .config import RunConfig, load_config, save_config
from .core import (
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
from .foveation import (
    RegionBucket,
    StreamCondition,
    apply_condition,
    partition,
    sample,
    voxel_downsample,
)
from .ingest import (
    CameraIntrinsics,
    Detection,
    DetectionFrame,
    MaskFileDetector,
    RgbdDataset,
    forward_project,
    load_frame,
    project,
)
from .transport import (
    GazeSource,
    ServerConfig,
    StaticGaze,
    StreamClient,
    StreamServer,
    TraceGaze,
    load_gaze_trace,
    pack_gaze,
    save_gaze_trace,
    unpack_gaze,
)

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "Detection",
    "DetectionFrame",
    "FoveationModel",
    "FramePacket",
    "GazeSource",
    "GazeState",
    "MalformedPacketError",
    "MaskFileDetector",
    "ObjectMap",
    "RegionBucket",
    "RgbdDataset",
    "RunConfig",
    "ServerConfig",
    "StageLedger",
    "StaticGaze",
    "StreamClient",
    "StreamCondition",
    "StreamServer",
    "Surfel",
    "SurfelCloud",
    "TraceGaze",
    "apply_condition",
    "band_of",
    "bands_of",
    "decode",
    "eccentricity_of",
    "encode",
    "forward_project",
    "load_config",
    "load_frame",
    "load_gaze_trace",
    "pack_gaze",
    "partition",
    "point_eccentricities",
    "project",
    "sample",
    "save_config",
    "save_gaze_trace",
    "unpack_gaze",
    "voxel_downsample",
]
