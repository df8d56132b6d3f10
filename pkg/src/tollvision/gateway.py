"""Service surface: event push to dashboards, queries, manual corrections.

The broker is deliberately dumb: publish() does a non-blocking enqueue per
subscriber and drops the subscriber on overflow. The pipeline thread never
waits on a client, so one stalled dashboard cannot back-pressure frame
processing.
"""

# note: no postponed annotations here; the FastAPI endpoints in create_app
# annotate with locally imported types, which string annotations cannot resolve

import json
import queue
import threading
from dataclasses import dataclass, field

from .config import AppConfig
from .events import EventMessage, EventType
from .plates import validate_format
from .store import TransactionNotFoundError, TransactionStore

_OVERFLOW_REASON = "event buffer overflow"


@dataclass
class BrokerClient:
    client_id: int
    buffer: queue.Queue
    type_filter: frozenset[str] | None = None
    next_sequence: int = 1
    dead: bool = False
    drop_reason: str | None = None
    delivered: int = field(default=0)

    def wants(self, event_type: str) -> bool:
        return self.type_filter is None or event_type in self.type_filter


class EventBroker:
    """Fan-out with per-client bounded buffers; thread-safe publish."""

    def __init__(self, buffer_size: int = 1000):
        self.buffer_size = buffer_size
        self._clients: list[BrokerClient] = []
        self._lock = threading.Lock()
        self._next_id = 1

    def subscribe(self, type_filter: frozenset[str] | None = None) -> BrokerClient:
        with self._lock:
            client = BrokerClient(
                client_id=self._next_id,
                buffer=queue.Queue(maxsize=self.buffer_size),
                type_filter=type_filter,
            )
            self._next_id += 1
            self._clients.append(client)
            return client

    def unsubscribe(self, client: BrokerClient) -> None:
        with self._lock:
            if client in self._clients:
                self._clients.remove(client)

    @property
    def client_count(self) -> int:
        with self._lock:
            return len(self._clients)

    def publish(self, event: EventMessage) -> None:
        with self._lock:
            clients = list(self._clients)
        overflowed = []
        for client in clients:
            if client.dead or not client.wants(event.type.value):
                continue
            message = event.to_dict(client.next_sequence)
            try:
                client.buffer.put_nowait(message)
            except queue.Full:
                client.dead = True
                client.drop_reason = _OVERFLOW_REASON
                overflowed.append(client)
            else:
                client.next_sequence += 1
        for client in overflowed:
            self.unsubscribe(client)


def parse_type_filter(raw: str | None) -> frozenset[str] | None:
    if not raw:
        return None
    names = {part.strip() for part in raw.split(",") if part.strip()}
    valid = {t.value for t in EventType}
    unknown = names - valid
    if unknown:
        raise ValueError(f"unknown event types: {sorted(unknown)}")
    return frozenset(names)


class Gateway:
    """Transport-independent endpoint logic; the app factory wraps this."""

    def __init__(
        self,
        store: TransactionStore,
        broker: EventBroker,
        config: AppConfig | None = None,
        stats_provider=None,
    ):
        self.store = store
        self.broker = broker
        self.config = config or AppConfig()
        self.stats_provider = stats_provider

    def get_transactions(self, window: int = 50, review_only: bool = False) -> list[dict]:
        rows = self.store.recent(window)
        if review_only:
            rows = [t for t in rows if t.review_required]
        return [t.to_dict() for t in rows]

    def post_plate_correction(
        self,
        transaction_id: str,
        corrected_text: str,
        operator_id: str,
        override: bool = False,
    ) -> dict:
        corrected_text = corrected_text.strip().upper()
        if not override and validate_format(corrected_text, self.config.plate_formats) is None:
            raise FormatRejectedError(corrected_text)
        updated = self.store.amend_plate(transaction_id, corrected_text, operator_id)
        self.broker.publish(
            EventMessage(
                EventType.PLATE_UPDATED,
                {
                    "transaction_id": updated.transaction_id,
                    "track_id": updated.track_id,
                    "text": updated.plate_text,
                    "fused_confidence": updated.fused_confidence,
                    "status": updated.plate_status,
                    "review_required": updated.review_required,
                },
            )
        )
        return updated.to_dict()

    def get_stats(self) -> dict:
        if self.stats_provider is not None:
            return self.stats_provider()
        transactions = self.store.scan()
        locked = [t.fused_confidence for t in transactions if t.plate_status == "Locked"]
        per_class: dict[str, int] = {}
        for t in transactions:
            per_class[t.vehicle_class] = per_class.get(t.vehicle_class, 0) + 1
        return {
            "live_tracks": 0,
            "transactions_today": len(transactions),
            "mean_locked_confidence": round(sum(locked) / len(locked), 6) if locked else 0.0,
            "review_queue_depth": sum(1 for t in transactions if t.review_required),
            "per_class_counts": dict(sorted(per_class.items())),
        }


class FormatRejectedError(ValueError):
    def __init__(self, text: str):
        super().__init__(f"plate text {text!r} matches no configured format")
        self.text = text


def create_app(gateway: Gateway):
    """FastAPI application exposing the gateway over HTTP and websocket."""
    import asyncio

    from fastapi import FastAPI, HTTPException, Query, WebSocket, WebSocketDisconnect
    from pydantic import BaseModel

    class CorrectionBody(BaseModel):
        text: str
        operator_id: str = "operator"
        override: bool = False

    app = FastAPI(title="toll lane gateway")
    app.state.gateway = gateway

    @app.get("/transactions")
    def get_transactions(
        window: int = Query(default=50, ge=1, le=10000),
        review_only: bool = Query(default=False),
    ):
        return {"transactions": gateway.get_transactions(window, review_only)}

    @app.post("/transactions/{transaction_id}/plate")
    def post_plate(transaction_id: str, body: CorrectionBody):
        try:
            updated = gateway.post_plate_correction(
                transaction_id, body.text, body.operator_id, body.override
            )
        except FormatRejectedError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except TransactionNotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown transaction {transaction_id}")
        return {"transaction": updated}

    @app.get("/stats")
    def get_stats():
        return gateway.get_stats()

    @app.websocket("/ws/vehicles")
    async def ws_vehicles(websocket: WebSocket, types: str | None = Query(default=None)):
        try:
            type_filter = parse_type_filter(types)
        except ValueError:
            await websocket.close(code=1008, reason="unknown event type filter")
            return
        await websocket.accept()
        client = gateway.broker.subscribe(type_filter)
        loop = asyncio.get_running_loop()

        def next_message():
            # short poll so disconnects and overflow are noticed promptly
            try:
                return client.buffer.get(timeout=0.2)
            except queue.Empty:
                return None

        try:
            while True:
                if client.dead and client.buffer.empty():
                    await websocket.close(code=1013, reason=client.drop_reason or "dropped")
                    break
                message = await loop.run_in_executor(None, next_message)
                if message is None:
                    continue
                await websocket.send_text(json.dumps(message, separators=(",", ":")))
                client.delivered += 1
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            gateway.broker.unsubscribe(client)

    return app
