import pytest
from hypothesis import given
from hypothesis import strategies as st

from tollvision.geometry import (
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


def boxes(max_coord=1000.0):
    coord = st.floats(0, max_coord, allow_nan=False, allow_infinity=False)
    return st.builds(
        lambda x0, y0, w, h: BoundingBox(x0, y0, x0 + w, y0 + h),
        coord,
        coord,
        st.floats(0.001, 200),
        st.floats(0.001, 200),
    )


class TestBoundingBox:
    def test_rejects_inverted_edges(self):
        with pytest.raises(ValueError):
            BoundingBox(10, 0, 0, 10)
        with pytest.raises(ValueError):
            BoundingBox(0, 10, 10, 0)

    def test_zero_area_box_is_legal(self):
        b = BoundingBox(5, 5, 5, 5)
        assert b.area == 0.0

    def test_dimensions(self):
        b = BoundingBox(1, 2, 4, 8)
        assert (b.width, b.height, b.area) == (3, 6, 18)

    def test_translate(self):
        assert BoundingBox(0, 0, 10, 10).translate(4, 2) == BoundingBox(4, 2, 14, 12)

    def test_as_list_order(self):
        assert BoundingBox(1, 2, 3, 4).as_list() == [1, 2, 3, 4]


class TestIou:
    def test_half_horizontal_overlap(self):
        # intersection 50, union 150
        assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 15, 10)) == pytest.approx(1 / 3)

    def test_identical_boxes(self):
        b = BoundingBox(2, 3, 9, 11)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(5, 5, 6, 6)) == 0.0

    def test_degenerate_box_scores_zero(self):
        assert iou(BoundingBox(0, 0, 0, 10), BoundingBox(0, 0, 10, 10)) == 0.0

    def test_touching_edges_score_zero(self):
        assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(10, 0, 20, 10)) == 0.0

    @given(boxes(), boxes())
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == iou(b, a)

    @given(boxes())
    def test_self_iou_is_one(self, b):
        assert iou(b, b) == pytest.approx(1.0)

    @given(boxes(), st.floats(-50, 50), st.floats(-50, 50))
    def test_translation_invariant(self, b, dx, dy):
        assert iou(b.translate(dx, dy), b.translate(dx, dy)) == pytest.approx(1.0)
        assert b.translate(dx, dy).area == pytest.approx(b.area)


class TestContainment:
    def test_contains_with_slack(self):
        outer = BoundingBox(0, 0, 100, 100)
        assert contains(outer, BoundingBox(10, 10, 50, 50), slack=0)
        assert not contains(outer, BoundingBox(-5, 10, 50, 50), slack=0)
        assert contains(outer, BoundingBox(-5, 10, 50, 50), slack=10)

    def test_containment_ratio_is_fraction_of_inner(self):
        outer = BoundingBox(0, 0, 10, 10)
        inner = BoundingBox(5, 0, 15, 10)
        assert containment_ratio(outer, inner) == pytest.approx(0.5)

    def test_ratio_full_and_none(self):
        outer = BoundingBox(0, 0, 10, 10)
        assert containment_ratio(outer, BoundingBox(1, 1, 9, 9)) == 1.0
        assert containment_ratio(outer, BoundingBox(20, 20, 30, 30)) == 0.0

    def test_box_center(self):
        assert box_center(BoundingBox(0, 0, 10, 20)) == (5.0, 10.0)


class TestRawPlateRead:
    def test_char_confidence_length_must_match_text(self):
        with pytest.raises(ValueError):
            RawPlateRead("e1", "ABC", (0.9, 0.8))

    def test_rejects_alphabet_violations(self):
        with pytest.raises(ValueError):
            RawPlateRead("e1", "ab-1", (0.9, 0.9, 0.9, 0.9))

    def test_empty_read_is_legal(self):
        read = RawPlateRead("e1", "", ())
        assert read.mean_confidence == 0.0

    def test_mean_confidence(self):
        read = RawPlateRead("e1", "AB", (0.8, 0.6))
        assert read.mean_confidence == pytest.approx(0.7)


class TestDetection:
    def test_confidence_bounds(self):
        box = BoundingBox(0, 0, 1, 1)
        with pytest.raises(ValueError):
            Detection(box, DetectionClass.VEHICLE, 1.5)
        with pytest.raises(ValueError):
            Detection(box, DetectionClass.VEHICLE, -0.1)

    def test_raw_reads_only_on_plates(self):
        box = BoundingBox(0, 0, 1, 1)
        read = RawPlateRead("e1", "A", (0.9,))
        with pytest.raises(ValueError):
            Detection(box, DetectionClass.VEHICLE, 0.9, raw_reads=(read,))
        det = Detection(box, DetectionClass.LICENSE_PLATE, 0.9, raw_reads=(read,))
        assert det.raw_reads == (read,)

    def test_class_wire_names(self):
        assert [c.value for c in DetectionClass] == [
            "Vehicle",
            "LicensePlate",
            "Wheel",
            "Background",
        ]


class TestFrameDetections:
    def test_rejects_negative_frame_index(self):
        with pytest.raises(ValueError):
            FrameDetections(-1, 0.0, ())

    def test_of_class_filters(self):
        box = BoundingBox(0, 0, 1, 1)
        frame = FrameDetections(
            0,
            0.0,
            (
                Detection(box, DetectionClass.VEHICLE, 0.9),
                Detection(box, DetectionClass.WHEEL, 0.8),
            ),
        )
        assert [d.det_class for d in frame.of_class(DetectionClass.WHEEL)] == [
            DetectionClass.WHEEL
        ]
