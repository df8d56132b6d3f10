"""Scores a pipeline run against simulator ground truth.

Detector metrics use the standard greedy protocol: predictions ranked by
confidence, each matched to the highest-IoU unmatched truth box of the same
class at the IoU threshold. The precision-recall sweep emits one point per
distinct confidence value; because greedy matching of a confidence-ranked
prefix is a prefix of the full greedy matching, the sweep agrees exactly
with recomputing the match at every threshold from scratch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import BoundingBox, FrameDetections, iou
from .pipeline import RunResult
from .sim import GroundTruth
from .trace import trace_sha256
from .transactions import TollTransaction

CLASS_NAMES = ("Vehicle", "LicensePlate", "Wheel")
BACKGROUND = "Background"


class TraceMismatchError(ValueError):
    """Outputs and ground truth do not come from the same trace."""


def levenshtein(a: str, b: str) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        row = [i]
        for j, cb in enumerate(b, start=1):
            row.append(min(prev[j] + 1, row[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = row
    return prev[-1]


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float

    @property
    def f1(self) -> float:
        if self.precision + self.recall == 0.0:
            return 0.0
        return 2.0 * self.precision * self.recall / (self.precision + self.recall)


@dataclass
class ClassDetectionMetrics:
    class_name: str
    truth_count: int
    prediction_count: int
    precision: float
    recall: float
    average_precision: float
    optimal_f1: float
    optimal_threshold: float
    no_predictions: bool
    pr_curve: list[PRPoint] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "class": self.class_name,
            "truth_count": self.truth_count,
            "prediction_count": self.prediction_count,
            "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
            "average_precision": round(self.average_precision, 6),
            "optimal_f1": round(self.optimal_f1, 6),
            "optimal_threshold": round(self.optimal_threshold, 6),
            "no_predictions": self.no_predictions,
        }


@dataclass
class EvalReport:
    detection: dict[str, ClassDetectionMetrics]
    mean_average_precision: float
    confusion_matrix: dict[str, dict[str, int]]
    plate_accuracy: float
    char_accuracy: float
    mean_locked_confidence: float
    first_pass_lock_rate: float
    axle_accuracy: float
    id_switches: int
    track_purity: float
    vehicles_with_one_track: float
    transactions_per_vehicle: dict[int, int]
    unmatched_transactions: int
    vehicle_count: int
    no_outputs: bool

    def to_dict(self) -> dict:
        return {
            "detection": {name: m.to_dict() for name, m in sorted(self.detection.items())},
            "mean_average_precision": round(self.mean_average_precision, 6),
            "confusion_matrix": self.confusion_matrix,
            "plate_accuracy": round(self.plate_accuracy, 6),
            "char_accuracy": round(self.char_accuracy, 6),
            "mean_locked_confidence": round(self.mean_locked_confidence, 6),
            "first_pass_lock_rate": round(self.first_pass_lock_rate, 6),
            "axle_accuracy": round(self.axle_accuracy, 6),
            "id_switches": self.id_switches,
            "track_purity": round(self.track_purity, 6),
            "vehicles_with_one_track": round(self.vehicles_with_one_track, 6),
            "transactions_per_vehicle": {str(k): v for k, v in sorted(self.transactions_per_vehicle.items())},
            "unmatched_transactions": self.unmatched_transactions,
            "vehicle_count": self.vehicle_count,
            "no_outputs": self.no_outputs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


# --------------------------------------------------------------- detector PR


@dataclass(frozen=True)
class _Pred:
    confidence: float
    frame_index: int
    order: int  # global input order; the deterministic tie-break
    box: BoundingBox


def _greedy_labels(
    preds: list[_Pred], truths: dict[int, list[BoundingBox]], iou_threshold: float
) -> list[bool]:
    """True-positive flags for confidence-ranked predictions.

    Matching is sequential in rank order, so the labels of the first k
    predictions do not depend on any prediction ranked below k.
    """
    ranked = sorted(preds, key=lambda p: (-p.confidence, p.order))
    used: dict[int, set[int]] = {}
    labels = []
    for pred in ranked:
        candidates = truths.get(pred.frame_index, [])
        taken = used.setdefault(pred.frame_index, set())
        best_idx, best_iou = -1, 0.0
        for idx, tbox in enumerate(candidates):
            if idx in taken:
                continue
            overlap = iou(pred.box, tbox)
            if overlap >= iou_threshold and overlap > best_iou:
                best_idx, best_iou = idx, overlap
        if best_idx >= 0:
            taken.add(best_idx)
            labels.append(True)
        else:
            labels.append(False)
    return labels


def _pr_sweep(
    preds: list[_Pred], truth_total: int, labels: list[bool]
) -> list[PRPoint]:
    """One precision/recall point per distinct confidence, descending."""
    ranked = sorted(preds, key=lambda p: (-p.confidence, p.order))
    points: list[PRPoint] = []
    tp = fp = 0
    for i, (pred, is_tp) in enumerate(zip(ranked, labels)):
        if is_tp:
            tp += 1
        else:
            fp += 1
        last_of_threshold = i + 1 == len(ranked) or ranked[i + 1].confidence != pred.confidence
        if last_of_threshold:
            precision = tp / (tp + fp)
            recall = tp / truth_total if truth_total else 0.0
            points.append(PRPoint(pred.confidence, precision, recall))
    return points


def average_precision(points: list[PRPoint]) -> float:
    """Area under the PR curve: sum of recall increments times precision."""
    area = 0.0
    prev_recall = 0.0
    for point in points:  # already in descending-threshold order
        area += (point.recall - prev_recall) * point.precision
        prev_recall = point.recall
    return area


def _class_metrics(
    name: str,
    preds: list[_Pred],
    truths: dict[int, list[BoundingBox]],
    iou_threshold: float,
) -> ClassDetectionMetrics:
    truth_total = sum(len(v) for v in truths.values())
    if not preds:
        return ClassDetectionMetrics(
            class_name=name,
            truth_count=truth_total,
            prediction_count=0,
            precision=0.0,
            recall=0.0,
            average_precision=0.0,
            optimal_f1=0.0,
            optimal_threshold=0.0,
            no_predictions=True,
        )
    labels = _greedy_labels(preds, truths, iou_threshold)
    points = _pr_sweep(preds, truth_total, labels)
    final = points[-1]
    best = max(points, key=lambda p: (p.f1, p.threshold))
    return ClassDetectionMetrics(
        class_name=name,
        truth_count=truth_total,
        prediction_count=len(preds),
        precision=final.precision,
        recall=final.recall,
        average_precision=average_precision(points),
        optimal_f1=best.f1,
        optimal_threshold=best.threshold,
        no_predictions=False,
        pr_curve=points,
    )


# ----------------------------------------------------------- confusion matrix


def _confusion_matrix(
    frames: list[FrameDetections], truth: GroundTruth, iou_threshold: float
) -> dict[str, dict[str, int]]:
    """Rows are truth classes (plus Background for pure false positives).

    Every truth box lands in exactly one cell of its row: the class of the
    prediction it matched, or the Background column when nothing matched it.
    """
    labels = list(CLASS_NAMES) + [BACKGROUND]
    matrix = {row: {col: 0 for col in labels} for row in labels}
    truth_by_frame = {
        f.frame_index: [(b.box, name) for name, group in
                        (("Vehicle", f.vehicles), ("LicensePlate", f.plates), ("Wheel", f.wheels))
                        for b in group]
        for f in truth.frames
    }
    for frame in frames:
        entries = truth_by_frame.get(frame.frame_index, [])
        boxes = [BoundingBox(*b) for b, _ in entries]
        taken: set[int] = set()
        ranked = sorted(
            range(len(frame.detections)),
            key=lambda i: (-frame.detections[i].confidence, i),
        )
        matched_truth_class: dict[int, str] = {}
        for det_idx in ranked:
            det = frame.detections[det_idx]
            best_idx, best_iou = -1, 0.0
            for t_idx, tbox in enumerate(boxes):
                if t_idx in taken:
                    continue
                overlap = iou(det.box, tbox)
                if overlap >= iou_threshold and overlap > best_iou:
                    best_idx, best_iou = t_idx, overlap
            if best_idx >= 0:
                taken.add(best_idx)
                matched_truth_class[best_idx] = det.det_class.value
            else:
                matrix[BACKGROUND][det.det_class.value] += 1
        for t_idx, (_, truth_class) in enumerate(entries):
            predicted = matched_truth_class.get(t_idx, BACKGROUND)
            matrix[truth_class][predicted] += 1
    return matrix


# ------------------------------------------------------------ track alignment


def _assign_tracks(
    result: RunResult, truth: GroundTruth, iou_threshold: float
) -> dict[int, dict[int, int]]:
    """Per truth vehicle: frame_index -> track_id it was covered by."""
    obs_by_frame: dict[int, list[tuple[int, BoundingBox]]] = {}
    for frame_index, track_id, box in result.track_observations:
        obs_by_frame.setdefault(frame_index, []).append((track_id, BoundingBox(*box)))

    assignment: dict[int, dict[int, int]] = {v.vehicle_id: {} for v in truth.vehicles}
    for tf in truth.frames:
        observations = obs_by_frame.get(tf.frame_index, [])
        if not observations:
            continue
        candidates = []
        for t_idx, tb in enumerate(tf.vehicles):
            tbox = BoundingBox(*tb.box)
            for o_idx, (track_id, obox) in enumerate(observations):
                overlap = iou(tbox, obox)
                if overlap >= iou_threshold:
                    candidates.append((-overlap, t_idx, o_idx, track_id, tb.vehicle_id))
        candidates.sort()
        used_truth: set[int] = set()
        used_obs: set[int] = set()
        for _, t_idx, o_idx, track_id, vehicle_id in candidates:
            if t_idx in used_truth or o_idx in used_obs:
                continue
            used_truth.add(t_idx)
            used_obs.add(o_idx)
            if vehicle_id in assignment:
                assignment[vehicle_id][tf.frame_index] = track_id
    return assignment


def _count_id_switches(assignment: dict[int, dict[int, int]]) -> int:
    switches = 0
    for frames in assignment.values():
        for frame_index, track_id in frames.items():
            nxt = frames.get(frame_index + 1)
            if nxt is not None and nxt != track_id:
                switches += 1
    return switches


def _track_purity(assignment: dict[int, dict[int, int]]) -> float:
    per_track: dict[int, dict[int, int]] = {}
    for vehicle_id, frames in assignment.items():
        for track_id in frames.values():
            counts = per_track.setdefault(track_id, {})
            counts[vehicle_id] = counts.get(vehicle_id, 0) + 1
    if not per_track:
        return 0.0
    purities = [max(c.values()) / sum(c.values()) for c in per_track.values()]
    return sum(purities) / len(purities)


def _majority_vehicle_per_track(assignment: dict[int, dict[int, int]]) -> dict[int, int]:
    per_track: dict[int, dict[int, int]] = {}
    for vehicle_id, frames in assignment.items():
        for track_id in frames.values():
            counts = per_track.setdefault(track_id, {})
            counts[vehicle_id] = counts.get(vehicle_id, 0) + 1
    return {
        track_id: min((vid for vid, n in counts.items() if n == max(counts.values())))
        for track_id, counts in per_track.items()
    }


# -------------------------------------------------------------------- evaluate


def evaluate(
    frames: list[FrameDetections],
    result: RunResult,
    truth: GroundTruth,
    iou_threshold: float = 0.5,
) -> EvalReport:
    """Score one pipeline run; frames must be the exact trace the truth binds."""
    digest = trace_sha256(frames)
    if digest != truth.trace_sha256:
        raise TraceMismatchError("trace does not match ground truth (content hash differs)")
    if result.trace_sha256 is not None and result.trace_sha256 != truth.trace_sha256:
        raise TraceMismatchError("run output comes from a different trace")

    truth_boxes: dict[str, dict[int, list[BoundingBox]]] = {name: {} for name in CLASS_NAMES}
    for tf in truth.frames:
        for name, group in (("Vehicle", tf.vehicles), ("LicensePlate", tf.plates), ("Wheel", tf.wheels)):
            if group:
                truth_boxes[name][tf.frame_index] = [BoundingBox(*b.box) for b in group]

    preds: dict[str, list[_Pred]] = {name: [] for name in CLASS_NAMES}
    order = 0
    for frame in frames:
        for det in frame.detections:
            if det.det_class.value in preds:
                preds[det.det_class.value].append(
                    _Pred(det.confidence, frame.frame_index, order, det.box)
                )
            order += 1

    detection = {
        name: _class_metrics(name, preds[name], truth_boxes[name], iou_threshold)
        for name in CLASS_NAMES
    }
    scored = [m.average_precision for m in detection.values() if m.truth_count > 0]
    mean_ap = sum(scored) / len(scored) if scored else 0.0

    assignment = _assign_tracks(result, truth, iou_threshold)
    track_to_vehicle = _majority_vehicle_per_track(assignment)

    txns_by_track: dict[int, list[TollTransaction]] = {}
    for txn in result.transactions:
        txns_by_track.setdefault(txn.track_id, []).append(txn)

    transactions_per_vehicle = {v.vehicle_id: 0 for v in truth.vehicles}
    unmatched_transactions = 0
    for track_id, txns in txns_by_track.items():
        vehicle_id = track_to_vehicle.get(track_id)
        if vehicle_id is None:
            unmatched_transactions += len(txns)
        else:
            transactions_per_vehicle[vehicle_id] += len(txns)

    plate_hits = 0
    char_total = 0.0
    axle_hits = 0
    locked = 0
    for vehicle in truth.vehicles:
        canonical = _canonical_transaction(vehicle.vehicle_id, assignment, txns_by_track)
        if canonical is None:
            continue
        if canonical.plate_text == vehicle.plate_text:
            plate_hits += 1
        read_text = canonical.plate_text or ""  # never-read plates score zero
        denom = max(len(vehicle.plate_text), len(read_text), 1)
        char_total += 1.0 - levenshtein(vehicle.plate_text, read_text) / denom
        if canonical.axle_count == vehicle.axle_count:
            axle_hits += 1
        if canonical.plate_status == "Locked":
            locked += 1

    n = len(truth.vehicles)
    locked_confidences = [t.fused_confidence for t in result.transactions if t.plate_status == "Locked"]
    one_track = sum(1 for frames_map in assignment.values() if len(set(frames_map.values())) == 1)

    return EvalReport(
        detection=detection,
        mean_average_precision=mean_ap,
        confusion_matrix=_confusion_matrix(frames, truth, iou_threshold),
        plate_accuracy=plate_hits / n if n else 0.0,
        char_accuracy=char_total / n if n else 0.0,
        mean_locked_confidence=(
            sum(locked_confidences) / len(locked_confidences) if locked_confidences else 0.0
        ),
        first_pass_lock_rate=locked / n if n else 0.0,
        axle_accuracy=axle_hits / n if n else 0.0,
        id_switches=_count_id_switches(assignment),
        track_purity=_track_purity(assignment),
        vehicles_with_one_track=one_track / n if n else 0.0,
        transactions_per_vehicle=transactions_per_vehicle,
        unmatched_transactions=unmatched_transactions,
        vehicle_count=n,
        no_outputs=not result.track_observations and not result.transactions,
    )


def _canonical_transaction(
    vehicle_id: int,
    assignment: dict[int, dict[int, int]],
    txns_by_track: dict[int, list[TollTransaction]],
) -> TollTransaction | None:
    """The transaction of the track that covered this vehicle the longest."""
    frames_map = assignment.get(vehicle_id, {})
    if not frames_map:
        return None
    counts: dict[int, int] = {}
    for track_id in frames_map.values():
        counts[track_id] = counts.get(track_id, 0) + 1
    for track_id in sorted(counts, key=lambda t: (-counts[t], t)):
        txns = txns_by_track.get(track_id)
        if txns:
            return txns[0]
    return None


# -------------------------------------------------------- engine A/B harness


def _plate_accuracy_only(
    frames: list[FrameDetections], result: RunResult, truth: GroundTruth, iou_threshold: float
) -> float:
    assignment = _assign_tracks(result, truth, iou_threshold)
    txns_by_track: dict[int, list[TollTransaction]] = {}
    for txn in result.transactions:
        txns_by_track.setdefault(txn.track_id, []).append(txn)
    hits = 0
    for vehicle in truth.vehicles:
        canonical = _canonical_transaction(vehicle.vehicle_id, assignment, txns_by_track)
        if canonical is not None and canonical.plate_text == vehicle.plate_text:
            hits += 1
    return hits / len(truth.vehicles) if truth.vehicles else 0.0


def plate_accuracy_by_engine(
    frames: list[FrameDetections],
    truth: GroundTruth,
    config=None,
    iou_threshold: float = 0.5,
) -> dict[str, float]:
    """Per-plate accuracy of the full ensemble versus each engine alone.

    Single-engine variants keep every box identical and only drop the other
    engines' reads, so the tracker sees the same scene; only the OCR
    consensus differs. The bound trace's hash check does not apply to these
    derived views.
    """
    from .pipeline import Pipeline, replay_trace
    from .sim import filter_trace_to_engine

    digest = trace_sha256(frames)
    if digest != truth.trace_sha256:
        raise TraceMismatchError("trace does not match ground truth (content hash differs)")

    engines = sorted(
        {r.engine_id for frame in frames for det in frame.detections for r in det.raw_reads}
    )
    variants: dict[str, list[FrameDetections]] = {"ensemble": frames}
    for engine in engines:
        variants[engine] = filter_trace_to_engine(frames, engine)

    out = {}
    for name, variant in variants.items():
        pipe = Pipeline(config=config, clock=lambda: 0.0, record_events=False)
        replay_trace(pipe, variant, batch_size=8)
        out[name] = _plate_accuracy_only(variant, pipe.result, truth, iou_threshold)
    return out
