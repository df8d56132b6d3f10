"""Ensemble plate fusion: weighted read scoring, per-frame fusion and the
cross-frame consensus that locks a plate once confidence clears the threshold.

The per-read score is a linear blend of four validation inputs: engine
character confidence, format validity, per-track historical support, and
cross-frame consistency. Weights are configurable; the defaults sum to 1.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field, replace

from .geometry import RawPlateRead

_LETTERS = set("ABCDEFGHIJKLMNOPQRSTUVWXYZ")
_DIGITS = set("0123456789")


class SlotClass(enum.Enum):
    LETTER = "L"
    DIGIT = "D"
    EITHER = "?"


@dataclass(frozen=True, slots=True)
class PlateFormat:
    """A positional slot pattern for one regional plate layout.

    Pattern strings use ``L`` for a letter slot, ``D`` for a digit slot,
    ``?`` for either, and any other alphanumeric character as a fixed
    literal at that position.
    """

    format_id: str
    pattern: str
    region_label: str = ""

    def __post_init__(self) -> None:
        if not 2 <= len(self.pattern) <= 10:
            raise ValueError(f"pattern length must be in [2,10], got {len(self.pattern)!r}")

    def matches(self, text: str) -> bool:
        if len(text) != len(self.pattern):
            return False
        for ch, slot in zip(text, self.pattern):
            if slot == "L":
                if ch not in _LETTERS:
                    return False
            elif slot == "D":
                if ch not in _DIGITS:
                    return False
            elif slot == "?":
                if ch not in _LETTERS and ch not in _DIGITS:
                    return False
            elif ch != slot:  # fixed literal
                return False
        return True


def formats_from_patterns(patterns: list[str]) -> list[PlateFormat]:
    return [PlateFormat(format_id=f"fmt-{p}", pattern=p) for p in patterns]


def validate_format(text: str, formats: list[PlateFormat]) -> PlateFormat | None:
    """First format whose slot classes all match positionally, else None."""
    for fmt in formats:
        if fmt.matches(text):
            return fmt
    return None


@dataclass(frozen=True, slots=True)
class EngineWeightConfig:
    w_engine_confidence: float = 0.5
    w_format: float = 0.2
    w_history: float = 0.1
    w_frame_consistency: float = 0.2
    lock_threshold: float = 0.85
    min_frames_for_lock: int = 2
    agreement_bonus: float = 0.05

    def __post_init__(self) -> None:
        weights = (
            self.w_engine_confidence,
            self.w_format,
            self.w_history,
            self.w_frame_consistency,
        )
        if any(w < 0 for w in weights):
            raise ValueError("weights must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(weights)}")
        if not 0.0 < self.lock_threshold < 1.0:
            raise ValueError("lock_threshold must lie in (0,1)")
        if self.min_frames_for_lock < 1:
            raise ValueError("min_frames_for_lock must be >= 1")


class ConsensusStatus(enum.Enum):
    SCANNING = "Scanning"
    LOCKED = "Locked"
    MANUALLY_CORRECTED = "ManuallyCorrected"


@dataclass(frozen=True, slots=True)
class ContributingRead:
    """Audit-trail entry: one engine's read in one frame."""

    frame_index: int
    engine_id: str
    text: str
    mean_confidence: float

    def to_dict(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "engine_id": self.engine_id,
            "text": self.text,
            "mean_confidence": round(self.mean_confidence, 6),
        }


@dataclass(frozen=True, slots=True)
class PlateConsensus:
    track_id: int
    text: str | None = None
    fused_confidence: float = 0.0
    status: ConsensusStatus = ConsensusStatus.SCANNING
    contributing_reads: tuple[ContributingRead, ...] = ()
    format_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "track_id": self.track_id,
            "text": self.text,
            "fused_confidence": round(self.fused_confidence, 6),
            "status": self.status.value,
        }


def read_score(
    read: RawPlateRead,
    formats: list[PlateFormat],
    history: Counter,
    frame_consensus: float,
    cfg: EngineWeightConfig,
) -> float:
    """Weighted four-term score for one raw read, clamped to [0,1].

    `history` counts texts already seen for this track; support is the
    read's count relative to the most frequent text (0 on empty history).
    `frame_consensus` is the fraction of this track's prior read frames
    whose best read agrees with this text (1.0 when there are none).
    """
    if not read.text:
        raise ValueError("cannot score an empty read")
    format_validity = 1.0 if validate_format(read.text, formats) is not None else 0.0
    if history:
        max_count = max(history.values())
        history_support = history[read.text] / max_count if max_count > 0 else 0.0
    else:
        history_support = 0.0
    score = (
        cfg.w_engine_confidence * read.mean_confidence
        + cfg.w_format * format_validity
        + cfg.w_history * history_support
        + cfg.w_frame_consistency * frame_consensus
    )
    return min(1.0, max(0.0, score))


@dataclass
class TrackReadContext:
    """Per-track evidence accumulated across frames, feeding read scores."""

    history: Counter = field(default_factory=Counter)
    best_texts: list[str] = field(default_factory=list)  # winning text per read frame

    def frame_consensus(self, text: str) -> float:
        if not self.best_texts:
            return 1.0
        return sum(1 for t in self.best_texts if t == text) / len(self.best_texts)

    def record_frame(self, reads: list[RawPlateRead], best_text: str) -> None:
        for read in reads:
            if read.text:
                self.history[read.text] += 1
        self.best_texts.append(best_text)


def fuse_frame(
    reads: list[RawPlateRead],
    context: TrackReadContext,
    formats: list[PlateFormat],
    cfg: EngineWeightConfig,
) -> tuple[str, float] | None:
    """Combine one frame's reads from all engines into (best_text, frame_score).

    Reads agreeing on a text boost its score by `agreement_bonus` per extra
    engine, capped at 1. Ties between texts break lexicographically. Returns
    None (a no-read marker) when every read is empty.
    """
    usable = [r for r in reads if r.text]
    if not usable:
        return None
    by_text: dict[str, list[RawPlateRead]] = {}
    for read in usable:
        by_text.setdefault(read.text, []).append(read)
    ranked: list[tuple[float, str]] = []
    for text, group in by_text.items():
        top = max(
            read_score(r, formats, context.history, context.frame_consensus(text), cfg)
            for r in group
        )
        ranked.append((min(1.0, top + cfg.agreement_bonus * (len(group) - 1)), text))
    # highest score wins; on a tie the lexicographically smaller text wins
    score, text = min(ranked, key=lambda pair: (-pair[0], pair[1]))
    return text, score


@dataclass
class ConsensusState:
    """Owns one track's consensus record and its per-frame fusion results."""

    consensus: PlateConsensus
    frame_results: list[tuple[str, float]] = field(default_factory=list)

    @property
    def read_frames(self) -> int:
        return len(self.frame_results)


def update_consensus(
    state: ConsensusState,
    frame_result: tuple[str, float],
    formats: list[PlateFormat],
    cfg: EngineWeightConfig,
    frame_index: int = -1,
    frame_reads: list[RawPlateRead] | None = None,
) -> PlateConsensus:
    """Fold one frame's fused result into the track's consensus.

    Confidence for a candidate text is the mean frame score of agreeing
    frames times its support fraction (floored at 0.5 for the majority
    text). Locked status is sticky: the text is pinned and confidence never
    decreases afterward; only manual correction can change a locked text.
    """
    consensus = state.consensus
    if consensus.status is ConsensusStatus.MANUALLY_CORRECTED:
        raise ValueError("consensus is manually corrected; updates are rejected")
    state.frame_results.append(frame_result)

    audit = consensus.contributing_reads
    if frame_reads:
        audit = audit + tuple(
            ContributingRead(frame_index, r.engine_id, r.text, r.mean_confidence)
            for r in frame_reads
        )

    totals: dict[str, list[float]] = {}
    for text, score in state.frame_results:
        totals.setdefault(text, []).append(score)
    n_frames = len(state.frame_results)
    majority_count = max(len(v) for v in totals.values())

    def candidate_confidence(text: str) -> float:
        scores = totals[text]
        support = len(scores) / n_frames
        if len(scores) == majority_count:
            support = max(support, 0.5)
        return (sum(scores) / len(scores)) * support

    if consensus.status is ConsensusStatus.LOCKED:
        pinned = consensus.text
        assert pinned is not None
        new_conf = candidate_confidence(pinned) if pinned in totals else 0.0
        return _commit(
            state,
            replace(
                consensus,
                fused_confidence=max(consensus.fused_confidence, new_conf),
                contributing_reads=audit,
            ),
        )

    # lexicographic tie-break on equal confidence, for determinism
    best_text = min(totals, key=lambda t: (-candidate_confidence(t), t))
    confidence = candidate_confidence(best_text)
    status = consensus.status
    if (
        confidence >= cfg.lock_threshold
        and len(totals[best_text]) >= cfg.min_frames_for_lock
    ):
        status = ConsensusStatus.LOCKED
    matched = validate_format(best_text, formats)
    return _commit(
        state,
        replace(
            consensus,
            text=best_text,
            fused_confidence=confidence,
            status=status,
            contributing_reads=audit,
            format_id=matched.format_id if matched else None,
        ),
    )


def _commit(state: ConsensusState, consensus: PlateConsensus) -> PlateConsensus:
    state.consensus = consensus
    return consensus


def manual_correct(consensus: PlateConsensus, corrected_text: str) -> PlateConsensus:
    """Gateway-only correction path; ManuallyCorrected is terminal."""
    return replace(
        consensus,
        text=corrected_text,
        status=ConsensusStatus.MANUALLY_CORRECTED,
    )
