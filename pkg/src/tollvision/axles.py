"""Axle counting from wheel detections.

Per frame, wheel centers are projected onto the vehicle's horizontal axis and
merged by 1-D single-linkage clustering; each surviving cluster is one visible
axle. Cluster coordinates are anchored to the plate center (falling back to
the vehicle's left edge) so estimates stay comparable while the vehicle moves.
A confidence-weighted vote across recent frames yields the validated count.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import median

from .geometry import BoundingBox, box_center

PLAUSIBLE_AXLES = range(2, 10)  # counts outside [2,9] are penalized, not rejected
GAP_FACTOR = 0.6  # merge wheels closer than this fraction of median wheel width
UNCLASSIFIED = "Unclassified"

DEFAULT_CLASS_TABLE: dict[int, str] = {
    2: "Class-2",
    3: "Class-3",
    4: "Class-4",
    5: "Class-5",
}


@dataclass(frozen=True, slots=True)
class WheelObservation:
    box: BoundingBox
    confidence: float
    frame_index: int


@dataclass(frozen=True, slots=True)
class AxleEstimate:
    """One frame's axle count with spatial confidence."""

    frame_index: int
    axle_count: int
    spatial_confidence: float
    cluster_centers: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.axle_count != len(self.cluster_centers):
            raise ValueError("axle_count must equal number of cluster centers")


@dataclass(frozen=True, slots=True)
class AxleVerdict:
    track_id: int
    validated_count: int
    temporal_confidence: float
    frames_used: int

    def to_dict(self) -> dict:
        return {
            "track_id": self.track_id,
            "validated_count": self.validated_count,
            "temporal_confidence": round(self.temporal_confidence, 6),
        }


def cluster_wheels(
    wheels: list[WheelObservation],
    vehicle_box: BoundingBox,
    plate_box: BoundingBox | None = None,
    slack: float = 10.0,
) -> AxleEstimate:
    """Cluster one frame's wheels into axles; see module docstring."""
    frame_index = wheels[0].frame_index if wheels else -1
    if not wheels:
        return AxleEstimate(frame_index, 0, 0.0, ())

    centers = sorted(box_center(w.box)[0] for w in wheels)
    gap_threshold = GAP_FACTOR * median(w.box.width for w in wheels)

    clusters: list[list[float]] = [[centers[0]]]
    for x in centers[1:]:
        if x - clusters[-1][-1] < gap_threshold:
            clusters[-1].append(x)
        else:
            clusters.append([x])

    anchor = box_center(plate_box)[0] if plate_box is not None else vehicle_box.x_min
    kept: list[float] = []
    for cluster in clusters:
        cx = sum(cluster) / len(cluster)
        if vehicle_box.x_min - slack <= cx <= vehicle_box.x_max + slack:
            kept.append(cx - anchor)

    count = len(kept)
    plausibility = 1.0 if count in PLAUSIBLE_AXLES else 0.5
    mean_conf = sum(w.confidence for w in wheels) / len(wheels)
    confidence = mean_conf * plausibility if count > 0 else 0.0
    return AxleEstimate(frame_index, count, confidence, tuple(kept))


def validate_temporal(
    history: list[AxleEstimate], window: int = 10, track_id: int = -1
) -> AxleVerdict:
    """Confidence-weighted vote over the most recent `window` estimates.

    Ties break toward the larger count: undercounting loses revenue while
    overcounts land in the operator review queue.
    """
    if not history:
        raise ValueError("axle history is empty")
    recent = history[-window:]
    votes: dict[int, float] = {}
    for est in recent:
        votes[est.axle_count] = votes.get(est.axle_count, 0.0) + est.spatial_confidence
    total = sum(votes.values())
    winner = max(votes, key=lambda c: (votes[c], c))
    confidence = votes[winner] / total if total > 0 else 0.0
    return AxleVerdict(
        track_id=track_id,
        validated_count=winner,
        temporal_confidence=confidence,
        frames_used=len(recent),
    )


def classify_vehicle(verdict: AxleVerdict, class_table: dict[int, str] | None = None) -> str:
    """Map a validated axle count to a vehicle class label.

    Counts above the table's maximum map to the top class; 0 or 1 axles
    (no reliable wheel evidence) map to Unclassified.
    """
    if verdict.validated_count < 0:
        raise ValueError("validated_count must be nonnegative")
    table = class_table if class_table is not None else DEFAULT_CLASS_TABLE
    count = verdict.validated_count
    if count <= 1:
        return UNCLASSIFIED
    if count in table:
        return table[count]
    top = max(table)
    if count > top:
        return table[top]
    return UNCLASSIFIED
