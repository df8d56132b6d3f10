from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tollvision.geometry import RawPlateRead
from tollvision.plates import (
    ConsensusState,
    ConsensusStatus,
    EngineWeightConfig,
    PlateConsensus,
    PlateFormat,
    TrackReadContext,
    formats_from_patterns,
    fuse_frame,
    manual_correct,
    read_score,
    update_consensus,
    validate_format,
)

FORMATS = formats_from_patterns(["LLLDDDD", "LLDD"])
CFG = EngineWeightConfig()


def read(text, mean_conf, engine="tesseract"):
    return RawPlateRead(engine, text, (mean_conf,) * len(text))


class TestValidateFormat:
    def test_full_plate_matches_letter_digit_pattern(self):
        fmt = validate_format("ABC1234", FORMATS)
        assert fmt is not None and fmt.pattern == "LLLDDDD"

    def test_digit_in_letter_slot_rejected(self):
        assert validate_format("1BC1234", FORMATS) is None

    def test_short_text_falls_through_to_shorter_pattern(self):
        fmt = validate_format("AB12", FORMATS)
        assert fmt is not None and fmt.pattern == "LLDD"

    def test_length_mismatch_never_matches(self):
        assert validate_format("ABC123", FORMATS) is None

    def test_fixed_literal_slot(self):
        fmt = PlateFormat("diplomatic", "XDD")
        assert fmt.matches("X12")
        assert not fmt.matches("Y12")

    def test_either_slot_accepts_both_classes(self):
        fmt = PlateFormat("mixed", "??")
        assert fmt.matches("A1") and fmt.matches("11") and fmt.matches("AA")

    @pytest.mark.parametrize("pattern", ["L", "LLLLLLLLLLL"])
    def test_pattern_length_bounds(self, pattern):
        with pytest.raises(ValueError):
            PlateFormat("bad", pattern)


class TestEngineWeightConfig:
    def test_defaults_are_valid(self):
        cfg = EngineWeightConfig()
        assert cfg.lock_threshold == 0.85
        assert cfg.min_frames_for_lock == 2

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            EngineWeightConfig(w_engine_confidence=0.6)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            EngineWeightConfig(
                w_engine_confidence=-0.1,
                w_format=0.5,
                w_history=0.3,
                w_frame_consistency=0.3,
            )

    @pytest.mark.parametrize("threshold", [0.0, 1.0, 1.5])
    def test_lock_threshold_open_interval(self, threshold):
        with pytest.raises(ValueError):
            EngineWeightConfig(lock_threshold=threshold)


class TestReadScore:
    def test_all_components_maximal(self):
        history = Counter({"ABC1234": 3})
        score = read_score(read("ABC1234", 1.0), FORMATS, history, 1.0, CFG)
        assert score == 1.0

    def test_format_match_empty_history_full_consensus(self):
        # 0.5*0.8 + 0.2*1 + 0.1*0 + 0.2*1
        score = read_score(read("ABC1234", 0.8), FORMATS, Counter(), 1.0, CFG)
        assert score == pytest.approx(0.80)

    def test_no_format_match_half_consensus(self):
        # 0.5*0.8 + 0 + 0 + 0.2*0.5
        score = read_score(read("ABC12J4", 0.8), FORMATS, Counter(), 0.5, CFG)
        assert score == pytest.approx(0.50)

    def test_history_support_is_relative_to_mode(self):
        history = Counter({"ABC1234": 1, "XYZ9999": 4})
        score = read_score(read("ABC1234", 0.8), FORMATS, history, 1.0, CFG)
        assert score == pytest.approx(0.80 + 0.1 * 0.25)

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            read_score(RawPlateRead("e", "", ()), FORMATS, Counter(), 1.0, CFG)

    @given(
        conf=st.floats(0, 1),
        consensus=st.floats(0, 1),
        support_count=st.integers(0, 5),
    )
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_each_component(self, conf, consensus, support_count):
        history = Counter({"ABC1234": support_count, "ZZZ0000": 5})
        base = read_score(read("ABC1234", conf), FORMATS, history, consensus, CFG)
        bumped_conf = read_score(
            read("ABC1234", min(1.0, conf + 0.1)), FORMATS, history, consensus, CFG
        )
        bumped_consensus = read_score(
            read("ABC1234", conf), FORMATS, history, min(1.0, consensus + 0.1), CFG
        )
        richer_history = Counter({"ABC1234": support_count + 1, "ZZZ0000": 5})
        bumped_history = read_score(
            read("ABC1234", conf), FORMATS, richer_history, consensus, CFG
        )
        assert bumped_conf >= base
        assert bumped_consensus >= base
        assert bumped_history >= base
        assert 0.0 <= base <= 1.0


class TestFuseFrame:
    def test_two_agreeing_engines_get_bonus(self):
        # read_scores 0.9 and 0.8 (confs 1.0 / 0.8, empty context), agreement
        # bonus lifts the max: min(1, 0.9 + 0.05) = 0.95
        reads = [read("ABC1234", 1.0, "tesseract"), read("ABC1234", 0.8, "easyocr")]
        result = fuse_frame(reads, TrackReadContext(), FORMATS, CFG)
        assert result == ("ABC1234", pytest.approx(0.95))

    def test_bonus_caps_at_one(self):
        # base score ~1.0 (history support maximal); +0.10 bonus must clamp
        context = TrackReadContext(history=Counter({"ABC1234": 2}))
        reads = [read("ABC1234", 1.0, e) for e in ("a", "b", "c")]
        _, score = fuse_frame(reads, context, FORMATS, CFG)
        assert score == 1.0

    def test_format_valid_text_beats_invalid_at_equal_confidence(self):
        reads = [read("ABC1234", 0.9, "a"), read("ABC12J4", 0.9, "b")]
        text, _ = fuse_frame(reads, TrackReadContext(), FORMATS, CFG)
        assert text == "ABC1234"

    def test_singleton_read_passes_through_unboosted(self):
        r = read("ABC1234", 0.8)
        result = fuse_frame([r], TrackReadContext(), FORMATS, CFG)
        assert result == ("ABC1234", pytest.approx(0.80))

    def test_all_empty_reads_yield_no_read_marker(self):
        empties = [RawPlateRead("a", "", ()), RawPlateRead("b", "", ())]
        assert fuse_frame(empties, TrackReadContext(), FORMATS, CFG) is None

    def test_score_tie_breaks_lexicographically(self):
        reads = [read("BBB2222", 0.9, "a"), read("AAA1111", 0.9, "b")]
        text, _ = fuse_frame(reads, TrackReadContext(), FORMATS, CFG)
        assert text == "AAA1111"

    def test_prior_frames_feed_consistency_term(self):
        context = TrackReadContext()
        context.record_frame([read("ABC1234", 0.9)], "ABC1234")
        context.record_frame([read("ABC1234", 0.9)], "ABC1234")
        agree = fuse_frame([read("ABC1234", 0.8)], context, FORMATS, CFG)
        disagree = fuse_frame([read("XYZ9999", 0.8)], context, FORMATS, CFG)
        assert agree is not None and disagree is not None
        assert agree[1] > disagree[1]


class TestTrackReadContext:
    def test_consensus_defaults_to_full_with_no_history(self):
        assert TrackReadContext().frame_consensus("ABC1234") == 1.0

    def test_consensus_is_agreeing_fraction(self):
        context = TrackReadContext()
        context.record_frame([], "ABC1234")
        context.record_frame([], "ABC1234")
        context.record_frame([], "XYZ9999")
        assert context.frame_consensus("ABC1234") == pytest.approx(2 / 3)


def fold(frame_results, cfg=CFG, track_id=1):
    state = ConsensusState(PlateConsensus(track_id=track_id))
    for result in frame_results:
        update_consensus(state, result, FORMATS, cfg)
    return state.consensus


class TestUpdateConsensus:
    def test_two_agreeing_frames_lock(self):
        consensus = fold([("ABC1234", 0.9), ("ABC1234", 0.92)])
        assert consensus.status is ConsensusStatus.LOCKED
        assert consensus.text == "ABC1234"
        # mean(0.9, 0.92) * support 1.0
        assert consensus.fused_confidence == pytest.approx(0.91)

    def test_single_frame_never_locks(self):
        consensus = fold([("ABC1234", 0.99)])
        assert consensus.status is ConsensusStatus.SCANNING
        assert consensus.text == "ABC1234"

    def test_majority_text_wins_with_support_fraction(self):
        consensus = fold([("ABC1234", 0.9), ("A8C1234", 0.6), ("ABC1234", 0.88)])
        assert consensus.text == "ABC1234"
        assert consensus.fused_confidence == pytest.approx((0.9 + 0.88) / 2 * (2 / 3))

    def test_majority_support_floored_at_half(self):
        # interleaved so nothing locks early; majority text ends with raw
        # support 2/5, floored at 0.5
        results = [
            ("AAA1111", 0.7),
            ("BBB2222", 0.8),
            ("AAA1111", 0.7),
            ("CCC3333", 0.8),
            ("DDD4444", 0.8),
        ]
        consensus = fold(results)
        assert consensus.status is ConsensusStatus.SCANNING
        assert consensus.text == "AAA1111"
        assert consensus.fused_confidence == pytest.approx(0.7 * 0.5)

    def test_lock_threshold_is_inclusive(self):
        consensus = fold([("ABC1234", 0.85), ("ABC1234", 0.85)])
        assert consensus.status is ConsensusStatus.LOCKED

    def test_locked_text_pinned_against_later_disagreement(self):
        state = ConsensusState(PlateConsensus(track_id=1))
        update_consensus(state, ("ABC1234", 0.9), FORMATS, CFG)
        update_consensus(state, ("ABC1234", 0.92), FORMATS, CFG)
        assert state.consensus.status is ConsensusStatus.LOCKED
        for _ in range(10):
            update_consensus(state, ("XYZ9999", 0.99), FORMATS, CFG)
        assert state.consensus.text == "ABC1234"
        assert state.consensus.status is ConsensusStatus.LOCKED

    def test_locked_confidence_never_decreases(self):
        state = ConsensusState(PlateConsensus(track_id=1))
        update_consensus(state, ("ABC1234", 0.9), FORMATS, CFG)
        update_consensus(state, ("ABC1234", 0.92), FORMATS, CFG)
        seen = [state.consensus.fused_confidence]
        for result in [("XYZ9999", 0.2), ("ABC1234", 0.1), ("ABC1234", 0.95)]:
            update_consensus(state, result, FORMATS, CFG)
            seen.append(state.consensus.fused_confidence)
        assert seen == sorted(seen)

    def test_format_id_recorded_on_match(self):
        consensus = fold([("ABC1234", 0.9)])
        assert consensus.format_id == "fmt-LLLDDDD"
        consensus = fold([("ABC12J4", 0.9)])
        assert consensus.format_id is None

    def test_update_after_manual_correction_rejected(self):
        state = ConsensusState(PlateConsensus(track_id=1))
        update_consensus(state, ("ABC1234", 0.9), FORMATS, CFG)
        state.consensus = manual_correct(state.consensus, "ABC1235")
        with pytest.raises(ValueError):
            update_consensus(state, ("ABC1234", 0.9), FORMATS, CFG)

    def test_contributing_reads_accumulate(self):
        state = ConsensusState(PlateConsensus(track_id=1))
        update_consensus(
            state,
            ("ABC1234", 0.9),
            FORMATS,
            CFG,
            frame_index=4,
            frame_reads=[read("ABC1234", 0.9, "tesseract"), read("A8C1234", 0.7, "easyocr")],
        )
        assert [c.engine_id for c in state.consensus.contributing_reads] == [
            "tesseract",
            "easyocr",
        ]
        assert state.consensus.contributing_reads[0].frame_index == 4


class TestManualCorrect:
    def test_correction_is_terminal_and_replaces_text(self):
        consensus = fold([("ABC1234", 0.9), ("ABC1234", 0.92)])
        corrected = manual_correct(consensus, "ABC1235")
        assert corrected.text == "ABC1235"
        assert corrected.status is ConsensusStatus.MANUALLY_CORRECTED


plate_texts = st.sampled_from(["ABC1234", "A8C1234", "XYZ9999", "AB12"])
frame_streams = st.lists(
    st.tuples(plate_texts, st.floats(0.0, 1.0)), min_size=1, max_size=30
)


class TestConsensusProperties:
    @given(frame_streams)
    @settings(max_examples=100, deadline=None)
    def test_locked_never_reverts_and_confidence_bounded(self, stream):
        state = ConsensusState(PlateConsensus(track_id=1))
        locked_at = None
        for i, result in enumerate(stream):
            update_consensus(state, result, FORMATS, CFG)
            assert 0.0 <= state.consensus.fused_confidence <= 1.0
            if state.consensus.status is ConsensusStatus.LOCKED and locked_at is None:
                locked_at = i
            if locked_at is not None:
                assert state.consensus.status is ConsensusStatus.LOCKED

    @given(frame_streams)
    @settings(max_examples=50, deadline=None)
    def test_identical_streams_fold_identically(self, stream):
        assert fold(stream) == fold(stream)

    @given(
        st.integers(2, 8),
        st.floats(0.85, 1.0),
        st.sampled_from(["ABC1234", "XYZ9999"]),
    )
    @settings(max_examples=50, deadline=None)
    def test_agreement_dominance(self, n_frames, conf, text):
        # every engine reads the same format-valid text at high confidence in
        # every frame: the stream must end Locked on that text
        context = TrackReadContext()
        state = ConsensusState(PlateConsensus(track_id=1))
        for _ in range(n_frames):
            reads = [read(text, conf, e) for e in ("tesseract", "easyocr", "paddleocr")]
            result = fuse_frame(reads, context, FORMATS, CFG)
            assert result is not None
            context.record_frame(reads, result[0])
            update_consensus(state, result, FORMATS, CFG)
        assert state.consensus.status is ConsensusStatus.LOCKED
        assert state.consensus.text == text
