"""Socket server exposing an EmbeddedStore over the text key-value protocol.

Request:  one line, ``COMMAND [json-payload]``.
Response: one line, ``+OK [json-body]`` or ``-ERR <code> <message>``.

Commands: PING, PUT, GET, CONTAINS, RECENT, SCAN, AMEND, CLEANUP.
"""

from __future__ import annotations

import json
import logging
import socketserver
import threading

from .store import (
    ArchivedRecordError,
    DuplicateTransactionError,
    EmbeddedStore,
    StoreError,
    TransactionNotFoundError,
)
from .transactions import TollTransaction

log = logging.getLogger(__name__)


def _ok(body=None) -> str:
    if body is None:
        return "+OK"
    return "+OK " + json.dumps(body, separators=(",", ":"))


def _err(code: str, message: str) -> str:
    return f"-ERR {code} {message}"


def handle_command(store: EmbeddedStore, line: str) -> str:
    command, _, raw = line.partition(" ")
    payload = json.loads(raw) if raw.strip() else None
    try:
        if command == "PING":
            return _ok("pong")
        if command == "PUT":
            store.put(TollTransaction.from_dict(payload))
            return _ok({})
        if command == "GET":
            return _ok(store.get(payload["transaction_id"]).to_dict())
        if command == "CONTAINS":
            return _ok(store.contains(payload["transaction_id"]))
        if command == "RECENT":
            rows = store.recent(int(payload["window_size"]))
            return _ok([t.to_dict() for t in rows])
        if command == "SCAN":
            return _ok([t.to_dict() for t in store.scan()])
        if command == "AMEND":
            txn = store.amend_plate(
                payload["transaction_id"],
                payload["corrected_text"],
                payload["operator_id"],
            )
            return _ok(txn.to_dict())
        if command == "CLEANUP":
            archived, deleted = store.archive_and_cleanup(
                float(payload["now_ms"]),
                float(payload["archive_age_ms"]),
                float(payload["delete_age_ms"]),
            )
            return _ok({"archived": archived, "deleted": deleted})
        return _err("bad-request", f"unknown command {command}")
    except DuplicateTransactionError as exc:
        return _err("conflict", str(exc))
    except TransactionNotFoundError as exc:
        return _err("not-found", str(exc))
    except ArchivedRecordError as exc:
        return _err("archived", str(exc))
    except (StoreError, KeyError, ValueError, TypeError) as exc:
        return _err("bad-request", str(exc))


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        store = self.server.store  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8").rstrip("\n")
            if not line:
                continue
            response = handle_command(store, line)
            self.wfile.write(response.encode("utf-8") + b"\n")
            self.wfile.flush()


class StoreServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, bind: tuple[str, int], store: EmbeddedStore):
        super().__init__(bind, _Handler)
        self.store = store


def serve(
    bind_address: str, archive_path: str | None = None, ready: threading.Event | None = None
) -> None:
    """Blocking entry point for the ``store serve`` CLI command."""
    host, _, port = bind_address.rpartition(":")
    server = StoreServer((host or "127.0.0.1", int(port)), EmbeddedStore(archive_path=archive_path))
    log.info("store listening on %s", bind_address)
    if ready is not None:
        ready.set()
    server.serve_forever()


def start_in_thread(
    bind_address: str, archive_path: str | None = None
) -> tuple[StoreServer, threading.Thread]:
    """Run a store server on a daemon thread; returns (server, thread)."""
    host, _, port = bind_address.rpartition(":")
    server = StoreServer((host or "127.0.0.1", int(port)), EmbeddedStore(archive_path=archive_path))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
