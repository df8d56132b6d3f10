"""Detection-trace file format: the contract between simulator, replay CLI and pipeline.

One :class:`FrameDetections` per line, JSON-encoded with a fixed field layout:

    {"frame_index": 0, "timestamp_ms": 0.0,
     "detections": [{"class": "Vehicle", "confidence": 0.9,
                     "box": [x_min, y_min, x_max, y_max],
                     "raw_reads": [{"engine_id": "...", "text": "...",
                                    "char_confidences": [...]}]}]}

Integer fields round-trip bit-exactly; reals round-trip to 6 decimal places
(they are rounded to 6 decimals on write).
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Iterable, Iterator
from pathlib import Path
from typing import IO

from .geometry import BoundingBox, Detection, DetectionClass, FrameDetections, RawPlateRead


def _r6(x: float) -> float:
    return round(float(x), 6)


def frame_to_dict(frame: FrameDetections) -> dict:
    return {
        "frame_index": frame.frame_index,
        "timestamp_ms": _r6(frame.timestamp_ms),
        "detections": [
            {
                "class": det.det_class.value,
                "confidence": _r6(det.confidence),
                "box": [_r6(v) for v in det.box.as_list()],
                "raw_reads": [
                    {
                        "engine_id": read.engine_id,
                        "text": read.text,
                        "char_confidences": [_r6(c) for c in read.char_confidences],
                    }
                    for read in det.raw_reads
                ],
            }
            for det in frame.detections
        ],
    }


def frame_from_dict(payload: dict) -> FrameDetections:
    detections = []
    for det in payload["detections"]:
        reads = tuple(
            RawPlateRead(
                engine_id=r["engine_id"],
                text=r["text"],
                char_confidences=tuple(float(c) for c in r["char_confidences"]),
            )
            for r in det.get("raw_reads", [])
        )
        detections.append(
            Detection(
                box=BoundingBox(*(float(v) for v in det["box"])),
                det_class=DetectionClass(det["class"]),
                confidence=float(det["confidence"]),
                raw_reads=reads,
            )
        )
    return FrameDetections(
        frame_index=int(payload["frame_index"]),
        timestamp_ms=float(payload["timestamp_ms"]),
        detections=tuple(detections),
    )


def dumps_frame(frame: FrameDetections) -> str:
    return json.dumps(frame_to_dict(frame), separators=(",", ":"))


def loads_frame(line: str) -> FrameDetections:
    return frame_from_dict(json.loads(line))


def write_trace(frames: Iterable[FrameDetections], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame in frames:
            fh.write(dumps_frame(frame))
            fh.write("\n")


def trace_sha256(frames: Iterable[FrameDetections]) -> str:
    """Content hash of the serialized trace; identical to hashing the file bytes."""
    digest = hashlib.sha256()
    for frame in frames:
        digest.update(dumps_frame(frame).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


def read_trace(source: str | Path | IO[str]) -> Iterator[FrameDetections]:
    """Stream frames from a trace file path or an open text handle."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from read_trace(fh)
        return
    for line in source:
        line = line.strip()
        if line:
            yield loads_frame(line)
