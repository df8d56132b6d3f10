"""IoU-based vehicle tracking with a persistence state machine.

The tracker is a single-writer state machine: exactly one caller applies
:meth:`VehicleTracker.update_tracks` in frame order. Tracks handed to
downstream stages must be treated as read-only.

Lifecycle: Tentative -> Active -> (Occluded <-> Active) -> Exited, with an
early Tentative -> Exited drop for detector flicker. Exited is terminal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .geometry import (
    BoundingBox,
    Detection,
    DetectionClass,
    FrameDetections,
    RawPlateRead,
    box_center,
    containment_ratio,
    contains,
    iou,
)


class TrackStatus(enum.Enum):
    TENTATIVE = "Tentative"
    ACTIVE = "Active"
    OCCLUDED = "Occluded"
    EXITED = "Exited"


# Legal transitions; anything else is a bug.
_LEGAL_TRANSITIONS: frozenset[tuple[TrackStatus, TrackStatus]] = frozenset(
    {
        (TrackStatus.TENTATIVE, TrackStatus.ACTIVE),
        (TrackStatus.TENTATIVE, TrackStatus.EXITED),
        (TrackStatus.ACTIVE, TrackStatus.OCCLUDED),
        (TrackStatus.OCCLUDED, TrackStatus.ACTIVE),
        (TrackStatus.ACTIVE, TrackStatus.EXITED),
        (TrackStatus.OCCLUDED, TrackStatus.EXITED),
    }
)


class TrackEventType(enum.Enum):
    CREATED = "Created"
    ACTIVATED = "Activated"
    OCCLUDED = "Occluded"
    REACQUIRED = "Reacquired"
    EXITED = "Exited"


@dataclass(frozen=True, slots=True)
class TrackEvent:
    """Lifecycle event emitted on the pipeline bus."""

    event_type: TrackEventType
    track_id: int
    frame_index: int
    timestamp_ms: float

    def to_dict(self) -> dict:
        return {
            "event_type": self.event_type.value,
            "track_id": self.track_id,
            "frame_index": self.frame_index,
            "timestamp_ms": self.timestamp_ms,
        }


@dataclass(frozen=True, slots=True)
class TrackerConfig:
    iou_match_threshold: float = 0.30
    activation_hits: int = 3
    occlusion_patience_frames: int = 15
    tentative_patience_frames: int = 5
    velocity_smoothing: float = 0.5
    duplicate_iou_threshold: float = 0.9

    def __post_init__(self) -> None:
        if self.iou_match_threshold <= 0:
            raise ValueError("iou_match_threshold must be positive")
        if self.activation_hits <= 0 or self.occlusion_patience_frames <= 0:
            raise ValueError("hit/patience thresholds must be positive")
        if self.tentative_patience_frames <= 0:
            raise ValueError("tentative_patience_frames must be positive")
        if not 0.0 <= self.velocity_smoothing <= 1.0:
            raise ValueError("velocity_smoothing must lie in [0,1]")


@dataclass
class Track:
    """A persistent vehicle identity with accumulated evidence.

    Mutable, but owned exclusively by the tracker; downstream consumers
    receive it as a read-only reference.
    """

    track_id: int
    status: TrackStatus
    last_box: BoundingBox
    velocity: tuple[float, float]
    last_confidence: float
    entry_timestamp: float
    exit_timestamp: float | None = None
    frames_since_seen: int = 0
    hit_count: int = 0
    ever_activated: bool = False
    # (frame_index, reads from all engines that frame)
    plate_history: list[tuple[int, tuple[RawPlateRead, ...]]] = field(default_factory=list)
    # per-frame axle estimates, appended by the pipeline stage
    axle_history: list = field(default_factory=list)

    def transition(self, new_status: TrackStatus) -> None:
        if (self.status, new_status) not in _LEGAL_TRANSITIONS:
            raise ValueError(f"illegal transition {self.status.value} -> {new_status.value}")
        self.status = new_status
        if new_status is TrackStatus.ACTIVE:
            self.ever_activated = True


class StreamOrderError(ValueError):
    """Raised when frames arrive out of order or with gaps."""


def predict(track: Track) -> BoundingBox:
    """Extrapolate the track's box to the next frame using its velocity."""
    if track.status is TrackStatus.EXITED:
        raise ValueError(f"cannot predict exited track {track.track_id}")
    steps = track.frames_since_seen + 1
    return track.last_box.translate(track.velocity[0] * steps, track.velocity[1] * steps)


def match_detections(
    tracks: list[Track],
    vehicle_detections: list[Detection],
    cfg: TrackerConfig,
) -> tuple[list[tuple[int, int]], list[Track], list[int]]:
    """Greedy descending-IoU one-to-one assignment of detections to tracks.

    Returns (assignments as (track_id, detection_index) pairs, unmatched
    tracks, unmatched detection indices). Ties on IoU break toward the lower
    track_id (older track) for determinism.
    """
    for det in vehicle_detections:
        if det.det_class is not DetectionClass.VEHICLE:
            raise ValueError("match_detections only accepts Vehicle detections")
    candidates: list[tuple[float, int, int]] = []  # (-iou, track_id, det_idx)
    predicted = {}
    for track in tracks:
        if track.status is TrackStatus.EXITED:
            raise ValueError("exited tracks must not be matched")
        predicted[track.track_id] = predict(track)
    for track in tracks:
        pbox = predicted[track.track_id]
        for di, det in enumerate(vehicle_detections):
            score = iou(pbox, det.box)
            if score >= cfg.iou_match_threshold:
                candidates.append((-score, track.track_id, di))
    candidates.sort()
    assigned_tracks: set[int] = set()
    assigned_dets: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for neg_score, track_id, det_idx in candidates:
        if track_id in assigned_tracks or det_idx in assigned_dets:
            continue
        assigned_tracks.add(track_id)
        assigned_dets.add(det_idx)
        pairs.append((track_id, det_idx))
    unmatched_tracks = [t for t in tracks if t.track_id not in assigned_tracks]
    unmatched_dets = [i for i in range(len(vehicle_detections)) if i not in assigned_dets]
    return pairs, unmatched_tracks, unmatched_dets


def suppress_duplicates(detections: list[Detection], iou_threshold: float) -> list[Detection]:
    """Collapse near-identical vehicle detections to the higher-confidence one."""
    ordered = sorted(
        range(len(detections)), key=lambda i: (-detections[i].confidence, i)
    )
    kept: list[Detection] = []
    for idx in ordered:
        det = detections[idx]
        if all(iou(det.box, k.box) <= iou_threshold for k in kept):
            kept.append(det)
    return kept


@dataclass(frozen=True, slots=True)
class Attachment:
    """Plate and wheel detections assigned to one matched track for one frame."""

    track_id: int
    plates: tuple[Detection, ...]
    wheels: tuple[Detection, ...]


class VehicleTracker:
    """Maintains vehicle identity across frames; see module docstring."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.tracks: dict[int, Track] = {}
        self._next_id = 1
        self._last_frame_index: int | None = None
        self._matched_this_frame: dict[int, Detection] = {}

    @property
    def live_tracks(self) -> list[Track]:
        return [t for t in self.tracks.values() if t.status is not TrackStatus.EXITED]

    def update_tracks(self, frame: FrameDetections) -> list[TrackEvent]:
        """Advance the state machine by one frame of vehicle detections."""
        if self._last_frame_index is not None and frame.frame_index <= self._last_frame_index:
            raise StreamOrderError(
                f"frame_index {frame.frame_index} not after {self._last_frame_index}"
            )
        self._last_frame_index = frame.frame_index
        cfg = self.cfg
        events: list[TrackEvent] = []
        ts = frame.timestamp_ms

        vehicles = suppress_duplicates(
            frame.of_class(DetectionClass.VEHICLE), cfg.duplicate_iou_threshold
        )
        live = sorted(self.live_tracks, key=lambda t: t.track_id)
        pairs, unmatched_tracks, unmatched_dets = match_detections(live, vehicles, cfg)

        self._matched_this_frame = {}
        for track_id, det_idx in pairs:
            track = self.tracks[track_id]
            det = vehicles[det_idx]
            self._apply_match(track, det)
            self._matched_this_frame[track_id] = det
            if track.status is TrackStatus.TENTATIVE and track.hit_count >= cfg.activation_hits:
                track.transition(TrackStatus.ACTIVE)
                events.append(
                    TrackEvent(TrackEventType.ACTIVATED, track_id, frame.frame_index, ts)
                )
            elif track.status is TrackStatus.OCCLUDED:
                track.transition(TrackStatus.ACTIVE)
                events.append(
                    TrackEvent(TrackEventType.REACQUIRED, track_id, frame.frame_index, ts)
                )

        for track in unmatched_tracks:
            track.frames_since_seen += 1
            if track.status is TrackStatus.ACTIVE:
                track.transition(TrackStatus.OCCLUDED)
                events.append(
                    TrackEvent(TrackEventType.OCCLUDED, track.track_id, frame.frame_index, ts)
                )
            patience = (
                cfg.tentative_patience_frames
                if track.status is TrackStatus.TENTATIVE
                else cfg.occlusion_patience_frames
            )
            if track.frames_since_seen > patience:
                track.transition(TrackStatus.EXITED)
                track.exit_timestamp = ts
                events.append(
                    TrackEvent(TrackEventType.EXITED, track.track_id, frame.frame_index, ts)
                )

        for det_idx in unmatched_dets:
            det = vehicles[det_idx]
            track = Track(
                track_id=self._next_id,
                status=TrackStatus.TENTATIVE,
                last_box=det.box,
                velocity=(0.0, 0.0),
                last_confidence=det.confidence,
                entry_timestamp=ts,
                hit_count=1,
            )
            self._next_id += 1
            self.tracks[track.track_id] = track
            self._matched_this_frame[track.track_id] = det
            events.append(
                TrackEvent(TrackEventType.CREATED, track.track_id, frame.frame_index, ts)
            )
            if track.hit_count >= cfg.activation_hits:
                track.transition(TrackStatus.ACTIVE)
                events.append(
                    TrackEvent(TrackEventType.ACTIVATED, track.track_id, frame.frame_index, ts)
                )

        return events

    def _apply_match(self, track: Track, det: Detection) -> None:
        steps = track.frames_since_seen + 1
        old_cx, old_cy = box_center(track.last_box)
        new_cx, new_cy = box_center(det.box)
        observed = ((new_cx - old_cx) / steps, (new_cy - old_cy) / steps)
        alpha = self.cfg.velocity_smoothing
        track.velocity = (
            alpha * track.velocity[0] + (1.0 - alpha) * observed[0],
            alpha * track.velocity[1] + (1.0 - alpha) * observed[1],
        )
        track.last_box = det.box
        track.last_confidence = det.confidence
        track.frames_since_seen = 0
        track.hit_count += 1

    def attach_plate_and_wheels(
        self, frame: FrameDetections, slack: float = 10.0
    ) -> list[Attachment]:
        """Assign this frame's plate and wheel detections to matched tracks.

        A detection contained in several vehicle boxes (with slack) goes to
        the vehicle with the highest containment ratio. Plate reads are
        appended to the owning track's plate history; wheel handling is left
        to the caller (the axle stage).
        """
        matched = self._matched_this_frame
        if not matched:
            return []
        boxes = {tid: det.box for tid, det in matched.items()}
        plates: dict[int, list[Detection]] = {tid: [] for tid in matched}
        wheels: dict[int, list[Detection]] = {tid: [] for tid in matched}

        for det in frame.detections:
            if det.det_class is DetectionClass.LICENSE_PLATE:
                sink = plates
            elif det.det_class is DetectionClass.WHEEL:
                sink = wheels
            else:
                continue
            owner = self._owner_track(det.box, boxes, slack)
            if owner is not None:
                sink[owner].append(det)

        attachments = []
        for tid in sorted(matched):
            track = self.tracks[tid]
            frame_reads: list[RawPlateRead] = []
            for plate in plates[tid]:
                frame_reads.extend(plate.raw_reads)
            if frame_reads:
                track.plate_history.append((frame.frame_index, tuple(frame_reads)))
            attachments.append(
                Attachment(
                    track_id=tid,
                    plates=tuple(plates[tid]),
                    wheels=tuple(wheels[tid]),
                )
            )
        return attachments

    @staticmethod
    def _owner_track(
        box: BoundingBox, vehicle_boxes: dict[int, BoundingBox], slack: float
    ) -> int | None:
        containing = [
            tid for tid, vbox in vehicle_boxes.items() if contains(vbox, box, slack)
        ]
        if not containing:
            return None
        if len(containing) == 1:
            return containing[0]
        # argmax of containment ratio, ties toward the older track
        return max(containing, key=lambda tid: (containment_ratio(vehicle_boxes[tid], box), -tid))

    def force_exit_live_tracks(self, frame_index: int, timestamp_ms: float) -> list[TrackEvent]:
        """End-of-stream drain: exit every live track at the given timestamp."""
        events = []
        for track in sorted(self.live_tracks, key=lambda t: t.track_id):
            track.transition(TrackStatus.EXITED)
            track.exit_timestamp = timestamp_ms
            events.append(
                TrackEvent(TrackEventType.EXITED, track.track_id, frame_index, timestamp_ms)
            )
        return events
