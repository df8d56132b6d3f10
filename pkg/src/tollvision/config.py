"""Deployment configuration: one YAML document covering every stage.

Every key is optional; omitted keys fall back to the defaults below. Rate and
class tables are configuration placeholders, not ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .axles import DEFAULT_CLASS_TABLE, UNCLASSIFIED
from .plates import EngineWeightConfig, PlateFormat, formats_from_patterns
from .tracker import TrackerConfig

DEFAULT_PLATE_PATTERNS = ["LLLDDDD"]

DEFAULT_RATE_TABLE: dict[str, int] = {
    "Class-2": 200,
    "Class-3": 400,
    "Class-4": 600,
    "Class-5": 900,
    UNCLASSIFIED: 200,
}


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    optimal_batch_size: int = 8
    min_batch_size: int = 1
    load_threshold: float = 0.8
    stale_ttl_ms: float = 300_000.0
    containment_slack_px: float = 10.0
    axle_vote_window: int = 10
    rate_table: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_RATE_TABLE))
    class_table: dict[int, str] = field(default_factory=lambda: dict(DEFAULT_CLASS_TABLE))

    def __post_init__(self) -> None:
        if self.min_batch_size > self.optimal_batch_size:
            raise ValueError("min_batch_size must be <= optimal_batch_size")
        if self.stale_ttl_ms <= 0:
            raise ValueError("stale_ttl_ms must be positive")
        if not 0.0 < self.load_threshold <= 1.0:
            raise ValueError("load_threshold must lie in (0,1]")
        labels = set(self.class_table.values()) | {UNCLASSIFIED}
        missing = labels - set(self.rate_table)
        if missing:
            raise ValueError(f"rate_table missing classes: {sorted(missing)}")


@dataclass(frozen=True, slots=True)
class GatewayConfig:
    client_buffer: int = 1000
    stats_interval_frames: int = 50


@dataclass(frozen=True, slots=True)
class StoreConfig:
    address: str | None = None  # None selects the embedded engine
    archive_path: str = "archive.jsonl"


@dataclass(frozen=True)
class AppConfig:
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    plates: EngineWeightConfig = field(default_factory=EngineWeightConfig)
    plate_formats: list[PlateFormat] = field(
        default_factory=lambda: formats_from_patterns(DEFAULT_PLATE_PATTERNS)
    )
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    store: StoreConfig = field(default_factory=StoreConfig)


def _build(section_cls, payload: dict | None):
    return section_cls(**(payload or {}))


def load_config(path: str | Path | None) -> AppConfig:
    if path is None:
        return AppConfig()
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}

    plates_section = dict(doc.get("plates") or {})
    patterns = plates_section.pop("formats", DEFAULT_PLATE_PATTERNS)

    pipeline_section = dict(doc.get("pipeline") or {})
    if "class_table" in pipeline_section:
        pipeline_section["class_table"] = {
            int(k): v for k, v in pipeline_section["class_table"].items()
        }

    return AppConfig(
        tracker=_build(TrackerConfig, doc.get("tracker")),
        plates=_build(EngineWeightConfig, plates_section),
        plate_formats=formats_from_patterns(list(patterns)),
        pipeline=_build(PipelineConfig, pipeline_section),
        gateway=_build(GatewayConfig, doc.get("gateway")),
        store=_build(StoreConfig, doc.get("store")),
    )
