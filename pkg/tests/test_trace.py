import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tollvision.geometry import (
    BoundingBox,
    Detection,
    DetectionClass,
    FrameDetections,
    RawPlateRead,
)
from tollvision.trace import (
    dumps_frame,
    loads_frame,
    read_trace,
    trace_sha256,
    write_trace,
)


def canonical_frames():
    return [
        FrameDetections(
            0,
            0.0,
            (
                Detection(BoundingBox(10, 20, 110, 80), DetectionClass.VEHICLE, 0.9375),
                Detection(
                    BoundingBox(70, 60, 100, 72),
                    DetectionClass.LICENSE_PLATE,
                    0.875,
                    raw_reads=(
                        RawPlateRead(
                            "engine-a",
                            "ABC1234",
                            (0.9, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96),
                        ),
                    ),
                ),
            ),
        ),
        FrameDetections(
            1,
            40.0,
            (Detection(BoundingBox(22.123456789, 20, 122.1, 80), DetectionClass.WHEEL, 0.5),),
        ),
    ]


# The serialized form is the interchange contract; these bytes must not drift.
CANONICAL_LINE_0 = (
    '{"frame_index":0,"timestamp_ms":0.0,"detections":[{"class":"Vehicle",'
    '"confidence":0.9375,"box":[10.0,20.0,110.0,80.0],"raw_reads":[]},'
    '{"class":"LicensePlate","confidence":0.875,"box":[70.0,60.0,100.0,72.0],'
    '"raw_reads":[{"engine_id":"engine-a","text":"ABC1234",'
    '"char_confidences":[0.9,0.91,0.92,0.93,0.94,0.95,0.96]}]}]}'
)
CANONICAL_SHA256 = "6ec98a20ba72782eb096054dd5f1cbeff0d00a8cb01e7716f104053dfdaed8a8"


def test_wire_format_is_frozen():
    assert dumps_frame(canonical_frames()[0]) == CANONICAL_LINE_0


def test_trace_hash_is_frozen():
    assert trace_sha256(canonical_frames()) == CANONICAL_SHA256


def test_reals_round_to_six_decimals_on_write():
    line = dumps_frame(canonical_frames()[1])
    assert json.loads(line)["detections"][0]["box"][0] == 22.123457


def test_integers_round_trip_bit_exact():
    frame = FrameDetections(1234567, 40.0, ())
    assert loads_frame(dumps_frame(frame)).frame_index == 1234567


def test_round_trip_preserves_content():
    for frame in canonical_frames():
        again = loads_frame(dumps_frame(frame))
        assert dumps_frame(again) == dumps_frame(frame)


def test_parses_hand_written_line():
    line = (
        '{"frame_index": 3, "timestamp_ms": 120.5, "detections": '
        '[{"class": "Wheel", "confidence": 0.25, "box": [1, 2, 3, 4], "raw_reads": []}]}'
    )
    frame = loads_frame(line)
    assert frame.frame_index == 3
    assert frame.timestamp_ms == 120.5
    assert frame.detections[0].det_class is DetectionClass.WHEEL
    assert frame.detections[0].box == BoundingBox(1, 2, 3, 4)


def test_file_round_trip(tmp_path):
    path = tmp_path / "trace.jsonl"
    write_trace(canonical_frames(), path)
    frames = list(read_trace(path))
    assert [dumps_frame(f) for f in frames] == [dumps_frame(f) for f in canonical_frames()]
    assert trace_sha256(frames) == CANONICAL_SHA256


def test_file_hash_equals_stream_hash(tmp_path):
    import hashlib

    path = tmp_path / "trace.jsonl"
    write_trace(canonical_frames(), path)
    assert hashlib.sha256(path.read_bytes()).hexdigest() == CANONICAL_SHA256


def test_read_trace_skips_blank_lines():
    handle = io.StringIO(CANONICAL_LINE_0 + "\n\n\n")
    assert len(list(read_trace(handle))) == 1


@given(
    st.integers(0, 10**6),
    st.floats(0, 10**9, allow_nan=False),
    st.floats(0, 5000, allow_nan=False),
    st.floats(0.0001, 300),
    st.floats(0, 1),
)
def test_round_trip_any_frame(frame_index, ts, x0, w, conf):
    frame = FrameDetections(
        frame_index,
        ts,
        (Detection(BoundingBox(x0, 0, x0 + w, 10), DetectionClass.VEHICLE, conf),),
    )
    again = loads_frame(dumps_frame(frame))
    assert again.frame_index == frame.frame_index
    assert again.timestamp_ms == pytest.approx(frame.timestamp_ms, abs=1e-6)
    assert again.detections[0].confidence == pytest.approx(conf, abs=1e-6)
    # a second serialization is a fixed point: rounding already applied
    assert dumps_frame(loads_frame(dumps_frame(again))) == dumps_frame(again)
