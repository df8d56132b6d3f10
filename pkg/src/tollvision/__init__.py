"""Single-camera toll lane perception: tracking, plate fusion, axle counting.

The package turns a per-frame detection trace into finalized toll
transactions, with a live gateway for operator dashboards and a simulator
plus evaluation harness for measuring the whole chain against ground truth.
"""

from .axles import AxleEstimate, AxleVerdict, WheelObservation, classify_vehicle, cluster_wheels, validate_temporal
from .config import AppConfig, GatewayConfig, PipelineConfig, StoreConfig, load_config
from .events import EventMessage, EventType
from .evaluate import EvalReport, TraceMismatchError, evaluate
from .gateway import EventBroker, Gateway, create_app
from .geometry import (
    BoundingBox,
    Detection,
    DetectionClass,
    FrameDetections,
    RawPlateRead,
    box_center,
    iou,
)
from .pipeline import Pipeline, RunResult, adjust_batch_size, replay_adaptive, replay_trace
from .plates import (
    ConsensusStatus,
    EngineWeightConfig,
    PlateConsensus,
    PlateFormat,
    fuse_frame,
    read_score,
    validate_format,
)
from .sim import GroundTruth, ScenarioSpec, generate, noise_free_spec, noisy_spec
from .store import EmbeddedStore, RemoteStoreClient, StoreError, TransactionStore, open_store
from .tracker import Track, TrackerConfig, TrackEvent, TrackStatus, VehicleTracker, predict
from .trace import read_trace, trace_sha256, write_trace
from .transactions import TollTransaction

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "AxleEstimate",
    "AxleVerdict",
    "BoundingBox",
    "ConsensusStatus",
    "Detection",
    "DetectionClass",
    "EmbeddedStore",
    "EngineWeightConfig",
    "EvalReport",
    "EventBroker",
    "EventMessage",
    "EventType",
    "FrameDetections",
    "Gateway",
    "GatewayConfig",
    "GroundTruth",
    "Pipeline",
    "PipelineConfig",
    "PlateConsensus",
    "PlateFormat",
    "RawPlateRead",
    "RemoteStoreClient",
    "RunResult",
    "ScenarioSpec",
    "StoreConfig",
    "StoreError",
    "TollTransaction",
    "TraceMismatchError",
    "Track",
    "TrackerConfig",
    "TrackEvent",
    "TrackStatus",
    "TransactionStore",
    "VehicleTracker",
    "WheelObservation",
    "adjust_batch_size",
    "box_center",
    "classify_vehicle",
    "cluster_wheels",
    "create_app",
    "evaluate",
    "fuse_frame",
    "generate",
    "iou",
    "load_config",
    "noise_free_spec",
    "noisy_spec",
    "open_store",
    "predict",
    "read_score",
    "read_trace",
    "replay_adaptive",
    "replay_trace",
    "trace_sha256",
    "validate_format",
    "validate_temporal",
    "write_trace",
]
