"""Shared domain types for frames, boxes and detections, plus the IoU primitive.

Everything in this module is an immutable value object: instances are safe to
share between pipeline stages and threads without synchronization.
"""

from __future__ import annotations

import enum
import string
from dataclasses import dataclass, field

DEFAULT_ALPHABET = frozenset(string.ascii_uppercase + string.digits)


class DetectionClass(enum.Enum):
    """Object classes a detector can emit. Background never enters the tracker."""

    VEHICLE = "Vehicle"
    LICENSE_PLATE = "LicensePlate"
    WHEEL = "Wheel"
    BACKGROUND = "Background"


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box in real-valued pixel coordinates of the camera frame."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(
                f"invalid box: ({self.x_min},{self.y_min},{self.x_max},{self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def expand(self, slack: float) -> "BoundingBox":
        """Grow the box by `slack` pixels on every side."""
        return BoundingBox(
            self.x_min - slack, self.y_min - slack, self.x_max + slack, self.y_max + slack
        )

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True, slots=True)
class RawPlateRead:
    """One OCR engine's read of a plate crop: text plus per-character confidences."""

    engine_id: str
    text: str
    char_confidences: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.char_confidences) != len(self.text):
            raise ValueError(
                f"char_confidences length {len(self.char_confidences)} != text length {len(self.text)}"
            )
        bad = set(self.text) - DEFAULT_ALPHABET
        if bad:
            raise ValueError(f"text contains characters outside alphabet: {sorted(bad)}")

    @property
    def mean_confidence(self) -> float:
        if not self.char_confidences:
            return 0.0
        return sum(self.char_confidences) / len(self.char_confidences)


@dataclass(frozen=True, slots=True)
class Detection:
    """A single classed box in one frame, optionally carrying OCR reads."""

    box: BoundingBox
    det_class: DetectionClass
    confidence: float
    raw_reads: tuple[RawPlateRead, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0,1]")
        if self.raw_reads and self.det_class is not DetectionClass.LICENSE_PLATE:
            raise ValueError("raw_reads only allowed on LicensePlate detections")


@dataclass(frozen=True, slots=True)
class FrameDetections:
    """One frame's timestamped set of detections; the pipeline's sole input."""

    frame_index: int
    timestamp_ms: float
    detections: tuple[Detection, ...]

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be nonnegative, got {self.frame_index}")

    def of_class(self, det_class: DetectionClass) -> list[Detection]:
        return [d for d in self.detections if d.det_class is det_class]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes.

    Degenerate (zero-area) boxes score 0 against everything, including
    themselves: such detections are noise and 0/0 is meaningless.
    """
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def box_center(b: BoundingBox) -> tuple[float, float]:
    """Midpoint of the box on each axis."""
    return ((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0)


def contains(outer: BoundingBox, inner: BoundingBox, slack: float = 0.0) -> bool:
    """True iff `inner` lies within `outer` expanded by `slack` on each side."""
    if slack < 0:
        raise ValueError("slack must be nonnegative")
    grown = outer.expand(slack)
    return (
        inner.x_min >= grown.x_min
        and inner.y_min >= grown.y_min
        and inner.x_max <= grown.x_max
        and inner.y_max <= grown.y_max
    )


def containment_ratio(outer: BoundingBox, inner: BoundingBox) -> float:
    """Fraction of `inner`'s area covered by `outer` (0 for degenerate inner)."""
    if inner.area <= 0.0:
        return 0.0
    ix = min(outer.x_max, inner.x_max) - max(outer.x_min, inner.x_min)
    iy = min(outer.y_max, inner.y_max) - max(outer.y_min, inner.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    return (ix * iy) / inner.area
