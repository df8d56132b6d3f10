"""Synthetic plaza scenarios with exact ground truth.

Vehicles move left to right through a fixed-width scene, one speed per lane
so same-lane vehicles never overlap. Every frame yields vehicle, plate and
wheel boxes; OCR reads appear only while the vehicle crosses the read zone,
which is where a real plate camera resolves characters. Noise knobs (box
jitter, detection dropout, per-character OCR errors, ghost detections) are
all driven by one seeded generator, so a scenario is a pure function of its
spec.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

from .geometry import BoundingBox, Detection, DetectionClass, FrameDetections, RawPlateRead
from .trace import trace_sha256

ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
LETTERS = ALPHABET[:26]
DIGITS = ALPHABET[26:]

# visually confusable pairs; a corrupted character prefers its partner
CONFUSION = {"O": "0", "0": "O", "I": "1", "1": "I", "B": "8", "8": "B", "S": "5", "5": "S"}

# vehicle geometry by axle count: (length, height)
_DIMS = {2: (90.0, 55.0), 3: (130.0, 65.0), 4: (170.0, 75.0), 5: (210.0, 85.0)}

_LANE_HEIGHT = 110.0
_LANE_TOP = 40.0
_WHEEL_SIZE = 18.0
_PLATE_W = 36.0
_PLATE_H = 12.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Full description of one synthetic scenario; serializable for the CLI."""

    seed: int = 0
    target_vehicles: int = 20
    lanes: int = 3
    scene_width: float = 1280.0
    frame_interval_ms: float = 40.0
    arrival_rate: float = 0.08
    max_concurrent: int = 6
    dropout_rate: float = 0.0
    jitter_sigma: float = 0.0
    char_error_rate: float = 0.0
    ghost_rate: float = 0.0
    clutter_rate: float = 0.0
    occlusion_rate: float = 0.0
    read_zone: tuple[float, float] = (600.0, 660.0)
    engines: tuple[str, ...] = ("tesseract", "easyocr", "paddleocr")
    axle_weights: tuple[float, float, float, float] = (0.60, 0.20, 0.12, 0.08)
    speed_range: tuple[float, float] = (9.0, 14.0)

    def __post_init__(self):
        if self.target_vehicles < 1:
            raise ValueError("target_vehicles must be positive")
        if not 1 <= self.lanes <= 6:
            raise ValueError("lanes must be in [1, 6]")
        if self.max_concurrent < 1 or self.max_concurrent > 8:
            raise ValueError("max_concurrent must be in [1, 8]")
        if len(self.engines) < 1:
            raise ValueError("need at least one OCR engine")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if not 0.0 <= self.char_error_rate < 1.0:
            raise ValueError("char_error_rate must be in [0, 1)")
        if self.read_zone[0] >= self.read_zone[1]:
            raise ValueError("read_zone must be a non-empty interval")
        if not 0.0 < self.speed_range[0] <= self.speed_range[1]:
            raise ValueError("speed_range must be a positive, ordered interval")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "target_vehicles": self.target_vehicles,
            "lanes": self.lanes,
            "scene_width": self.scene_width,
            "frame_interval_ms": self.frame_interval_ms,
            "arrival_rate": self.arrival_rate,
            "max_concurrent": self.max_concurrent,
            "dropout_rate": self.dropout_rate,
            "jitter_sigma": self.jitter_sigma,
            "char_error_rate": self.char_error_rate,
            "ghost_rate": self.ghost_rate,
            "clutter_rate": self.clutter_rate,
            "occlusion_rate": self.occlusion_rate,
            "read_zone": list(self.read_zone),
            "engines": list(self.engines),
            "axle_weights": list(self.axle_weights),
            "speed_range": list(self.speed_range),
        }

    @staticmethod
    def from_dict(payload: dict) -> "ScenarioSpec":
        kwargs = dict(payload)
        for key in ("read_zone", "engines", "axle_weights", "speed_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return ScenarioSpec(**kwargs)


def noise_free_spec(seed: int, target_vehicles: int = 10) -> ScenarioSpec:
    return ScenarioSpec(seed=seed, target_vehicles=target_vehicles)


def noisy_spec(seed: int, target_vehicles: int = 200) -> ScenarioSpec:
    """Stress parameters: 10% dropout, 2px jitter, 5% character error rate."""
    return ScenarioSpec(
        seed=seed,
        target_vehicles=target_vehicles,
        dropout_rate=0.10,
        jitter_sigma=2.0,
        char_error_rate=0.05,
        ghost_rate=0.01,
        occlusion_rate=0.15,
    )


@dataclass(frozen=True)
class TruthVehicle:
    vehicle_id: int
    plate_text: str
    axle_count: int
    lane: int
    entry_frame: int
    exit_frame: int


@dataclass(frozen=True)
class TruthBox:
    vehicle_id: int
    box: tuple[float, float, float, float]


@dataclass(frozen=True)
class TruthFrame:
    frame_index: int
    vehicles: tuple[TruthBox, ...]
    plates: tuple[TruthBox, ...]
    wheels: tuple[TruthBox, ...]


@dataclass
class GroundTruth:
    """What actually happened, plus a hash binding it to one exact trace."""

    spec: ScenarioSpec
    vehicles: list[TruthVehicle]
    frames: list[TruthFrame]
    trace_sha256: str

    def vehicle_by_id(self, vehicle_id: int) -> TruthVehicle:
        for v in self.vehicles:
            if v.vehicle_id == vehicle_id:
                return v
        raise KeyError(vehicle_id)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "trace_sha256": self.trace_sha256,
            "vehicles": [
                {
                    "vehicle_id": v.vehicle_id,
                    "plate_text": v.plate_text,
                    "axle_count": v.axle_count,
                    "lane": v.lane,
                    "entry_frame": v.entry_frame,
                    "exit_frame": v.exit_frame,
                }
                for v in self.vehicles
            ],
            "frames": [
                {
                    "frame_index": f.frame_index,
                    "vehicles": [[b.vehicle_id, list(b.box)] for b in f.vehicles],
                    "plates": [[b.vehicle_id, list(b.box)] for b in f.plates],
                    "wheels": [[b.vehicle_id, list(b.box)] for b in f.wheels],
                }
                for f in self.frames
            ],
        }

    @staticmethod
    def from_dict(payload: dict) -> "GroundTruth":
        def boxes(rows):
            return tuple(TruthBox(int(vid), tuple(float(v) for v in box)) for vid, box in rows)

        return GroundTruth(
            spec=ScenarioSpec.from_dict(payload["spec"]),
            trace_sha256=payload["trace_sha256"],
            vehicles=[
                TruthVehicle(
                    vehicle_id=int(v["vehicle_id"]),
                    plate_text=v["plate_text"],
                    axle_count=int(v["axle_count"]),
                    lane=int(v["lane"]),
                    entry_frame=int(v["entry_frame"]),
                    exit_frame=int(v["exit_frame"]),
                )
                for v in payload["vehicles"]
            ],
            frames=[
                TruthFrame(
                    frame_index=int(f["frame_index"]),
                    vehicles=boxes(f["vehicles"]),
                    plates=boxes(f["plates"]),
                    wheels=boxes(f["wheels"]),
                )
                for f in payload["frames"]
            ],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "GroundTruth":
        return GroundTruth.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class _SimVehicle:
    vehicle_id: int
    plate_text: str
    axle_count: int
    lane: int
    speed: float
    entry_frame: int
    x: float  # x_min of the vehicle box
    occlusion: tuple[int, int] | None  # [start_frame, end_frame) of dropout
    exit_frame: int = -1

    @property
    def dims(self) -> tuple[float, float]:
        return _DIMS[self.axle_count]


def _random_plate(rng: random.Random, taken: set[str]) -> str:
    while True:
        text = "".join(rng.choice(LETTERS) for _ in range(3)) + "".join(
            rng.choice(DIGITS) for _ in range(4)
        )
        if text not in taken:
            taken.add(text)
            return text


def _corrupt_text(rng: random.Random, text: str, char_error_rate: float) -> tuple[str, list[bool]]:
    chars = []
    wrong = []
    for ch in text:
        if rng.random() < char_error_rate:
            if ch in CONFUSION and rng.random() < 0.5:
                chars.append(CONFUSION[ch])
            else:
                chars.append(rng.choice([c for c in ALPHABET if c != ch]))
            wrong.append(True)
        else:
            chars.append(ch)
            wrong.append(False)
    return "".join(chars), wrong


def _read_confidences(rng: random.Random, wrong: list[bool]) -> tuple[float, ...]:
    # a correctly decoded glyph is crisp; a miss hedges
    return tuple(
        rng.uniform(0.35, 0.70) if w else rng.uniform(0.88, 0.99) for w in wrong
    )


def _vehicle_boxes(v: _SimVehicle) -> tuple[BoundingBox, BoundingBox, list[BoundingBox]]:
    length, height = v.dims
    lane_top = _LANE_TOP + v.lane * _LANE_HEIGHT
    y_max = lane_top + _LANE_HEIGHT - 10.0
    y_min = y_max - height
    body = BoundingBox(v.x, y_min, v.x + length, y_max)

    plate = BoundingBox(
        body.x_max - _PLATE_W - 6.0,
        y_max - _PLATE_H - 8.0,
        body.x_max - 6.0,
        y_max - 8.0,
    )

    wheels = []
    margin = 14.0
    span = length - 2 * margin - _WHEEL_SIZE
    step = span / (v.axle_count - 1)
    for i in range(v.axle_count):
        wx = v.x + margin + i * step
        wheels.append(BoundingBox(wx, y_max - _WHEEL_SIZE, wx + _WHEEL_SIZE, y_max))
    return body, plate, wheels


def _jitter(rng: random.Random, box: BoundingBox, sigma: float) -> BoundingBox:
    if sigma <= 0.0:
        return box
    for _ in range(8):
        x0 = box.x_min + rng.gauss(0.0, sigma)
        y0 = box.y_min + rng.gauss(0.0, sigma)
        x1 = box.x_max + rng.gauss(0.0, sigma)
        y1 = box.y_max + rng.gauss(0.0, sigma)
        if x0 < x1 and y0 < y1:
            return BoundingBox(x0, y0, x1, y1)
    return box


def generate(spec: ScenarioSpec) -> tuple[list[FrameDetections], GroundTruth]:
    """Produce a detection trace and the ground truth that explains it."""
    rng = random.Random(spec.seed)
    if spec.arrival_rate <= 0.0:
        return [], GroundTruth(spec=spec, vehicles=[], frames=[], trace_sha256=trace_sha256([]))
    taken_plates: set[str] = set()
    axle_counts = (2, 3, 4, 5)

    live: list[_SimVehicle] = []
    done: list[_SimVehicle] = []
    spawned = 0
    next_id = 1
    lane_speeds = [rng.uniform(*spec.speed_range) for _ in range(spec.lanes)]

    frames: list[FrameDetections] = []
    truth_frames: list[TruthFrame] = []
    frame_index = 0
    # hard stop: generous upper bound so a bad spec cannot spin forever
    max_frames = 400 * spec.target_vehicles + 2000

    while (spawned < spec.target_vehicles or live) and frame_index < max_frames:
        ts = frame_index * spec.frame_interval_ms

        # --- spawn
        if spawned < spec.target_vehicles and len(live) < spec.max_concurrent:
            if rng.random() < spec.arrival_rate:
                lane = rng.randrange(spec.lanes)
                axles = rng.choices(axle_counts, weights=spec.axle_weights)[0]
                length = _DIMS[axles][0]
                clearance_ok = all(
                    v.lane != lane or v.x > length + 80.0 for v in live
                )
                if clearance_ok:
                    vehicle = _SimVehicle(
                        vehicle_id=next_id,
                        plate_text=_random_plate(rng, taken_plates),
                        axle_count=axles,
                        lane=lane,
                        speed=lane_speeds[lane],
                        entry_frame=frame_index,
                        x=-length,
                        occlusion=None,
                    )
                    if spec.occlusion_rate > 0.0 and rng.random() < spec.occlusion_rate:
                        transit = int((spec.scene_width + length) / vehicle.speed)
                        start = frame_index + rng.randrange(transit // 4, transit // 2)
                        vehicle.occlusion = (start, start + rng.randrange(4, 11))
                    next_id += 1
                    spawned += 1
                    live.append(vehicle)

        # --- truth boxes and detections
        detections: list[Detection] = []
        t_vehicles: list[TruthBox] = []
        t_plates: list[TruthBox] = []
        t_wheels: list[TruthBox] = []

        for v in live:
            body, plate, wheels = _vehicle_boxes(v)
            visible_body = body.x_max > 0.0 and body.x_min < spec.scene_width
            if not visible_body:
                continue
            t_vehicles.append(TruthBox(v.vehicle_id, tuple(body.as_list())))
            t_plates.append(TruthBox(v.vehicle_id, tuple(plate.as_list())))
            for w in wheels:
                t_wheels.append(TruthBox(v.vehicle_id, tuple(w.as_list())))

            occluded = v.occlusion is not None and v.occlusion[0] <= frame_index < v.occlusion[1]
            if occluded:
                continue

            if rng.random() >= spec.dropout_rate:
                detections.append(
                    Detection(
                        box=_jitter(rng, body, spec.jitter_sigma),
                        det_class=DetectionClass.VEHICLE,
                        confidence=rng.uniform(0.80, 0.99),
                    )
                )

            if rng.random() >= spec.dropout_rate:
                center_x = (body.x_min + body.x_max) / 2.0
                reads: list[RawPlateRead] = []
                if spec.read_zone[0] <= center_x <= spec.read_zone[1]:
                    for engine in spec.engines:
                        text, wrong = _corrupt_text(rng, v.plate_text, spec.char_error_rate)
                        reads.append(
                            RawPlateRead(
                                engine_id=engine,
                                text=text,
                                char_confidences=_read_confidences(rng, wrong),
                            )
                        )
                detections.append(
                    Detection(
                        box=_jitter(rng, plate, spec.jitter_sigma),
                        det_class=DetectionClass.LICENSE_PLATE,
                        confidence=rng.uniform(0.75, 0.98),
                        raw_reads=tuple(reads),
                    )
                )

            for w in wheels:
                if rng.random() >= spec.dropout_rate:
                    detections.append(
                        Detection(
                            box=_jitter(rng, w, spec.jitter_sigma),
                            det_class=DetectionClass.WHEEL,
                            confidence=rng.uniform(0.70, 0.97),
                        )
                    )

        # short-lived ghost vehicle detections: clutter the tracker must shrug off
        if spec.ghost_rate > 0.0 and rng.random() < spec.ghost_rate:
            gx = rng.uniform(0.0, spec.scene_width - 80.0)
            gy = rng.uniform(_LANE_TOP, _LANE_TOP + spec.lanes * _LANE_HEIGHT - 50.0)
            detections.append(
                Detection(
                    box=BoundingBox(gx, gy, gx + rng.uniform(40.0, 80.0), gy + rng.uniform(30.0, 50.0)),
                    det_class=DetectionClass.VEHICLE,
                    confidence=rng.uniform(0.30, 0.55),
                )
            )
        # spurious background-class boxes; no truth counterpart by definition
        if spec.clutter_rate > 0.0 and rng.random() < spec.clutter_rate:
            cx = rng.uniform(0.0, spec.scene_width - 40.0)
            cy = rng.uniform(0.0, _LANE_TOP + spec.lanes * _LANE_HEIGHT)
            detections.append(
                Detection(
                    box=BoundingBox(cx, cy, cx + rng.uniform(20.0, 60.0), cy + rng.uniform(20.0, 60.0)),
                    det_class=DetectionClass.BACKGROUND,
                    confidence=rng.uniform(0.25, 0.50),
                )
            )

        frames.append(
            FrameDetections(
                frame_index=frame_index,
                timestamp_ms=ts,
                detections=tuple(detections),
            )
        )
        truth_frames.append(
            TruthFrame(
                frame_index=frame_index,
                vehicles=tuple(t_vehicles),
                plates=tuple(t_plates),
                wheels=tuple(t_wheels),
            )
        )

        # --- advance
        still_live = []
        for v in live:
            v.x += v.speed
            if v.x > spec.scene_width:
                v.exit_frame = frame_index
                done.append(v)
            else:
                still_live.append(v)
        live = still_live
        frame_index += 1

    done.sort(key=lambda v: v.vehicle_id)
    truth = GroundTruth(
        spec=spec,
        vehicles=[
            TruthVehicle(
                vehicle_id=v.vehicle_id,
                plate_text=v.plate_text,
                axle_count=v.axle_count,
                lane=v.lane,
                entry_frame=v.entry_frame,
                exit_frame=v.exit_frame,
            )
            for v in done
        ],
        frames=truth_frames,
        trace_sha256=trace_sha256(frames),
    )
    return frames, truth


def filter_trace_to_engine(frames: list[FrameDetections], engine_id: str) -> list[FrameDetections]:
    """Keep only one OCR engine's reads; used for single-engine baselines."""
    out = []
    for frame in frames:
        detections = tuple(
            replace(det, raw_reads=tuple(r for r in det.raw_reads if r.engine_id == engine_id))
            if det.raw_reads
            else det
            for det in frame.detections
        )
        out.append(replace(frame, detections=detections))
    return out
