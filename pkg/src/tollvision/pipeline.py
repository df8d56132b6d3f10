"""Stage orchestration: ingest -> track -> fuse/count -> transact.

Batching is purely a throughput mechanism: output is identical to processing
frames one at a time, whatever the batch schedule. The tracker stage runs
single-threaded in frame order; plate fusion and axle estimation operate on
independent per-track state.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .axles import AxleVerdict, WheelObservation, classify_vehicle, cluster_wheels, validate_temporal
from .config import AppConfig, PipelineConfig
from .events import EventMessage, EventType
from .geometry import FrameDetections
from .plates import (
    ConsensusState,
    ConsensusStatus,
    PlateConsensus,
    TrackReadContext,
    fuse_frame,
    update_consensus,
)
from .store import StoreError, TransactionStore
from .tracker import StreamOrderError, Track, TrackEventType, TrackStatus, VehicleTracker
from .transactions import TollTransaction


def adjust_batch_size(current_load: float, cfg: PipelineConfig) -> int:
    """Halve the batch (floored at the minimum) when load passes the threshold."""
    if current_load > cfg.load_threshold:
        return max(cfg.min_batch_size, cfg.optimal_batch_size // 2)
    return cfg.optimal_batch_size


@dataclass
class RunResult:
    """Everything a run emits, for persistence and for the evaluation harness."""

    transactions: list[TollTransaction] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    # (frame_index, track_id, box as [x_min, y_min, x_max, y_max]) per matched track
    track_observations: list[tuple[int, int, list[float]]] = field(default_factory=list)
    frame_latencies_ms: list[float] = field(default_factory=list)
    frames_processed: int = 0
    trace_sha256: str | None = None

    def transactions_jsonl(self) -> str:
        return "".join(t.to_json() + "\n" for t in self.transactions)

    def to_dict(self) -> dict:
        return {
            "frames_processed": self.frames_processed,
            "trace_sha256": self.trace_sha256,
            "transactions": [t.to_dict() for t in self.transactions],
            "events": self.events,
            "track_observations": [
                {"frame_index": f, "track_id": t, "box": box}
                for f, t, box in self.track_observations
            ],
            "frame_latencies_ms": [round(v, 4) for v in self.frame_latencies_ms],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @staticmethod
    def from_dict(payload: dict) -> "RunResult":
        result = RunResult(
            transactions=[TollTransaction.from_dict(t) for t in payload["transactions"]],
            events=list(payload.get("events", [])),
            track_observations=[
                (int(o["frame_index"]), int(o["track_id"]), [float(v) for v in o["box"]])
                for o in payload.get("track_observations", [])
            ],
            frame_latencies_ms=[float(v) for v in payload.get("frame_latencies_ms", [])],
            frames_processed=int(payload.get("frames_processed", 0)),
            trace_sha256=payload.get("trace_sha256"),
        )
        return result


class Pipeline:
    """Single-stream orchestrator; one instance per camera feed."""

    def __init__(
        self,
        config: AppConfig | None = None,
        store: TransactionStore | None = None,
        event_sink: Callable[[EventMessage], None] | None = None,
        clock: Callable[[], float] | None = None,
        record_events: bool = True,
    ):
        from .store import EmbeddedStore  # default backend

        self.config = config or AppConfig()
        self.store = store if store is not None else EmbeddedStore()
        self.tracker = VehicleTracker(self.config.tracker)
        self.event_sink = event_sink
        self.clock = clock or (lambda: time.time() * 1000.0)
        self.record_events = record_events
        self.result = RunResult()

        self._read_contexts: dict[int, TrackReadContext] = {}
        self._consensus: dict[int, ConsensusState] = {}
        self._verdicts: dict[int, AxleVerdict] = {}
        self._persisted: set[int] = set()
        self._finalized: set[int] = set()
        self._pending_writes: list[TollTransaction] = []
        self._next_expected_frame: int | None = None
        self._last_timestamp_ms: float = 0.0
        self._stats_interval = self.config.gateway.stats_interval_frames

    # ------------------------------------------------------------------ events

    def _emit(self, event_type: EventType, payload: dict) -> None:
        message = EventMessage(event_type, payload)
        if self.record_events:
            self.result.events.append({"type": event_type.value, "payload": payload})
        if self.event_sink is not None:
            self.event_sink(message)

    # ------------------------------------------------------------------ frames

    def process_frame_batch(self, frames: list[FrameDetections]) -> list[TollTransaction]:
        """Run a contiguous, ordered batch of frames; returns new transactions."""
        for frame in frames:
            if self._next_expected_frame is not None and frame.frame_index != self._next_expected_frame:
                raise StreamOrderError(
                    f"expected frame {self._next_expected_frame}, got {frame.frame_index}"
                )
            self._next_expected_frame = frame.frame_index + 1
        new_transactions: list[TollTransaction] = []
        for frame in frames:
            new_transactions.extend(self._process_frame(frame))
        return new_transactions

    def _process_frame(self, frame: FrameDetections) -> list[TollTransaction]:
        started = time.perf_counter()
        self._last_timestamp_ms = frame.timestamp_ms
        track_events = self.tracker.update_tracks(frame)
        attachments = self.tracker.attach_plate_and_wheels(
            frame, slack=self.config.pipeline.containment_slack_px
        )

        for event in track_events:
            if event.event_type is TrackEventType.CREATED:
                self._emit(EventType.TRACK_CREATED, event.to_dict())
            elif event.event_type is not TrackEventType.EXITED:
                payload = event.to_dict()
                payload["status"] = self.tracker.tracks[event.track_id].status.value
                self._emit(EventType.TRACK_UPDATED, payload)

        for attachment in attachments:
            track = self.tracker.tracks[attachment.track_id]
            if attachment.plates:
                self._fuse_plate_reads(track, frame.frame_index)
            if attachment.wheels:
                self._estimate_axles(track, attachment, frame.frame_index)

        transactions: list[TollTransaction] = []
        for event in track_events:
            if event.event_type is TrackEventType.EXITED:
                payload = event.to_dict()
                payload["status"] = TrackStatus.EXITED.value
                self._emit(EventType.TRACK_UPDATED, payload)
                txn = self._finalize_if_due(self.tracker.tracks[event.track_id])
                if txn is not None:
                    transactions.append(txn)

        for tid, det in sorted(self.tracker._matched_this_frame.items()):
            self.result.track_observations.append((frame.frame_index, tid, det.box.as_list()))

        self.result.frames_processed += 1
        self.result.frame_latencies_ms.append((time.perf_counter() - started) * 1000.0)
        if self._stats_interval > 0 and self.result.frames_processed % self._stats_interval == 0:
            self._emit(EventType.STATS_SNAPSHOT, self.stats())
        return transactions

    # ------------------------------------------------------------------ plates

    def _fuse_plate_reads(self, track: Track, frame_index: int) -> None:
        context = self._read_contexts.setdefault(track.track_id, TrackReadContext())
        state = self._consensus.setdefault(
            track.track_id, ConsensusState(PlateConsensus(track_id=track.track_id))
        )
        reads = []
        for recorded_frame, batch in track.plate_history:
            if recorded_frame == frame_index:
                reads.extend(batch)
        if not reads:
            return
        fused = fuse_frame(reads, context, self.config.plate_formats, self.config.plates)
        if fused is None:
            return
        text, score = fused
        before = state.consensus
        after = update_consensus(
            state,
            (text, score),
            self.config.plate_formats,
            self.config.plates,
            frame_index=frame_index,
            frame_reads=reads,
        )
        context.record_frame(reads, text)
        if (before.text, before.status) != (after.text, after.status) or abs(
            before.fused_confidence - after.fused_confidence
        ) > 1e-12:
            self._emit(EventType.PLATE_UPDATED, after.to_dict())

    # ------------------------------------------------------------------- axles

    def _estimate_axles(self, track: Track, attachment, frame_index: int) -> None:
        slack = self.config.pipeline.containment_slack_px
        vehicle_box = self.tracker._matched_this_frame[track.track_id].box
        plate_box = attachment.plates[0].box if attachment.plates else None
        wheels = [
            WheelObservation(box=w.box, confidence=w.confidence, frame_index=frame_index)
            for w in attachment.wheels
        ]
        estimate = cluster_wheels(wheels, vehicle_box, plate_box, slack=slack)
        track.axle_history.append(estimate)
        verdict = validate_temporal(
            track.axle_history,
            window=self.config.pipeline.axle_vote_window,
            track_id=track.track_id,
        )
        previous = self._verdicts.get(track.track_id)
        self._verdicts[track.track_id] = verdict
        if previous is None or previous.validated_count != verdict.validated_count:
            self._emit(EventType.AXLE_UPDATED, verdict.to_dict())

    # ------------------------------------------------------------- transactions

    def finalize_transaction(
        self, track: Track, consensus: PlateConsensus, verdict: AxleVerdict
    ) -> TollTransaction:
        """Build the persisted record for one exited track."""
        if track.status is not TrackStatus.EXITED or track.exit_timestamp is None:
            raise ValueError("only exited tracks can be finalized")
        vehicle_class = classify_vehicle(verdict, self.config.pipeline.class_table)
        return TollTransaction(
            transaction_id=f"T{track.track_id:06d}",
            track_id=track.track_id,
            plate_text=consensus.text,
            fused_confidence=consensus.fused_confidence,
            plate_status=consensus.status.value,
            axle_count=verdict.validated_count,
            vehicle_class=vehicle_class,
            toll_amount=self.config.pipeline.rate_table[vehicle_class],
            entry_timestamp=track.entry_timestamp,
            exit_timestamp=track.exit_timestamp,
            review_required=consensus.status is not ConsensusStatus.LOCKED,
            created_at=self.clock(),
        )

    def _finalize_if_due(self, track: Track) -> TollTransaction | None:
        # Tracks that die Tentative are detector noise: no transaction.
        if not track.ever_activated or track.track_id in self._finalized:
            return None
        state = self._consensus.get(track.track_id)
        consensus = state.consensus if state else PlateConsensus(track_id=track.track_id)
        if track.axle_history:
            verdict = validate_temporal(
                track.axle_history,
                window=self.config.pipeline.axle_vote_window,
                track_id=track.track_id,
            )
        else:
            verdict = AxleVerdict(track.track_id, 0, 0.0, 0)
        txn = self.finalize_transaction(track, consensus, verdict)
        self._finalized.add(track.track_id)
        self.result.transactions.append(txn)
        self._persist(txn)
        self._emit(EventType.TRANSACTION_FINALIZED, txn.to_dict())
        return txn

    def _persist(self, txn: TollTransaction) -> None:
        try:
            self.store.put(txn)
        except StoreError:
            self._pending_writes.append(txn)
        else:
            self._persisted.add(txn.track_id)

    def flush_pending_writes(self) -> int:
        """Retry transaction writes that previously failed; returns count flushed."""
        still_pending: list[TollTransaction] = []
        flushed = 0
        for txn in self._pending_writes:
            try:
                self.store.put(txn)
            except StoreError:
                still_pending.append(txn)
            else:
                self._persisted.add(txn.track_id)
                flushed += 1
        self._pending_writes = still_pending
        return flushed

    # ------------------------------------------------------------------ memory

    def manage_memory(self, now_ms: float | None = None) -> int:
        """Evict exited, persisted, stale per-track records; never live tracks."""
        now = self._last_timestamp_ms if now_ms is None else now_ms
        ttl = self.config.pipeline.stale_ttl_ms
        evicted = 0
        for tid in list(self.tracker.tracks):
            track = self.tracker.tracks[tid]
            if track.status is not TrackStatus.EXITED:
                continue
            assert track.exit_timestamp is not None
            if now - track.exit_timestamp <= ttl:
                continue
            if track.ever_activated and tid in self._finalized and tid not in self._persisted:
                continue  # transaction write still pending
            del self.tracker.tracks[tid]
            self._read_contexts.pop(tid, None)
            self._consensus.pop(tid, None)
            self._verdicts.pop(tid, None)
            evicted += 1
        return evicted

    # ------------------------------------------------------------------- drain

    def finish(self) -> list[TollTransaction]:
        """End-of-stream: exit every live track and finalize its transaction."""
        frame_index = (self._next_expected_frame or 0) - 1
        events = self.tracker.force_exit_live_tracks(frame_index, self._last_timestamp_ms)
        transactions = []
        for event in events:
            payload = event.to_dict()
            payload["status"] = TrackStatus.EXITED.value
            self._emit(EventType.TRACK_UPDATED, payload)
            txn = self._finalize_if_due(self.tracker.tracks[event.track_id])
            if txn is not None:
                transactions.append(txn)
        return transactions

    # ------------------------------------------------------------------- stats

    def stats(self) -> dict:
        """Internally consistent snapshot of live state and store counters."""
        transactions = self.store.scan()
        locked = [t.fused_confidence for t in transactions if t.plate_status == "Locked"]
        per_class: dict[str, int] = {}
        today = time.strftime("%Y-%m-%d", time.gmtime(self.clock() / 1000.0))
        transactions_today = 0
        for t in transactions:
            per_class[t.vehicle_class] = per_class.get(t.vehicle_class, 0) + 1
            if time.strftime("%Y-%m-%d", time.gmtime(t.created_at / 1000.0)) == today:
                transactions_today += 1
        return {
            "live_tracks": len(self.tracker.live_tracks),
            "transactions_today": transactions_today,
            "mean_locked_confidence": round(sum(locked) / len(locked), 6) if locked else 0.0,
            "review_queue_depth": sum(1 for t in transactions if t.review_required),
            "per_class_counts": dict(sorted(per_class.items())),
        }


# ---------------------------------------------------------------------- replay


def replay_trace(
    pipeline: Pipeline,
    frames: Iterable[FrameDetections],
    batch_size: int = 1,
    finish: bool = True,
) -> RunResult:
    """Feed a trace through the pipeline in fixed-size batches."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    batch: list[FrameDetections] = []
    for frame in frames:
        batch.append(frame)
        if len(batch) == batch_size:
            pipeline.process_frame_batch(batch)
            batch = []
    if batch:
        pipeline.process_frame_batch(batch)
    if finish:
        pipeline.finish()
    return pipeline.result


def replay_adaptive(
    pipeline: Pipeline,
    frames: Iterable[FrameDetections],
    queue_capacity: int = 64,
    finish: bool = True,
) -> RunResult:
    """Replay with load-adaptive batch sizing over a bounded ingest queue.

    An ingest thread fills a bounded queue; the processing loop sizes each
    batch from the queue's occupancy fraction. Semantics are identical to
    fixed-size replay by construction.
    """
    import queue as queue_mod
    import threading

    q: queue_mod.Queue = queue_mod.Queue(maxsize=queue_capacity)
    _DONE = object()

    def ingest() -> None:
        for frame in frames:
            q.put(frame)
        q.put(_DONE)

    thread = threading.Thread(target=ingest, daemon=True)
    thread.start()
    done = False
    while not done:
        load = q.qsize() / queue_capacity
        target = adjust_batch_size(load, pipeline.config.pipeline)
        batch: list[FrameDetections] = []
        while len(batch) < target:
            item = q.get()
            if item is _DONE:
                done = True
                break
            batch.append(item)
        if batch:
            pipeline.process_frame_batch(batch)
    thread.join()
    if finish:
        pipeline.finish()
    return pipeline.result


def iter_batches(frames: Iterable[FrameDetections], sizes: Iterable[int]) -> Iterator[list[FrameDetections]]:
    """Chunk frames by an arbitrary batch-size schedule (last batch may be short)."""
    it = iter(frames)
    for size in sizes:
        batch = []
        for _ in range(max(1, size)):
            try:
                batch.append(next(it))
            except StopIteration:
                if batch:
                    yield batch
                return
        yield batch
    rest = list(it)
    if rest:
        yield rest
