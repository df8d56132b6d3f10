"""Keyed transaction persistence with rolling-window queries, archival and cleanup.

Two interchangeable backends sit behind one interface: an embedded in-process
engine (default; hermetic tests) and a client for an external key-value
service speaking a line-based text protocol over a socket (see
:mod:`tollvision.store_server`). Selection is a configuration concern.

Embedded-store semantics are linearizable: a single lock serializes every
operation, so store contents are a deterministic function of the operation
sequence.
"""

from __future__ import annotations

import abc
import json
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .transactions import TollTransaction


class StoreError(Exception):
    pass


class DuplicateTransactionError(StoreError):
    """Put of an existing key with a different payload."""


class TransactionNotFoundError(StoreError):
    pass


class ArchivedRecordError(StoreError):
    """Mutation attempted on an archived (immutable) record."""


def _now_ms() -> float:
    return time.time() * 1000.0


@dataclass
class StoreRecord:
    txn: TollTransaction
    inserted_at: float
    archived: bool = False


class TransactionStore(abc.ABC):
    """Contract shared by the embedded engine and the remote client."""

    @abc.abstractmethod
    def put(self, txn: TollTransaction) -> None:
        """Insert; idempotent for identical payloads, conflict otherwise."""

    @abc.abstractmethod
    def get(self, transaction_id: str) -> TollTransaction:
        ...

    @abc.abstractmethod
    def recent(self, window_size: int) -> list[TollTransaction]:
        """At most window_size unarchived transactions, newest first."""

    @abc.abstractmethod
    def scan(self) -> list[TollTransaction]:
        """Every unarchived transaction, newest first."""

    @abc.abstractmethod
    def amend_plate(
        self, transaction_id: str, corrected_text: str, operator_id: str
    ) -> TollTransaction:
        ...

    @abc.abstractmethod
    def archive_and_cleanup(
        self, now_ms: float, archive_age_ms: float, delete_age_ms: float
    ) -> tuple[int, int]:
        ...

    @abc.abstractmethod
    def contains(self, transaction_id: str) -> bool:
        ...


class EmbeddedStore(TransactionStore):
    """In-process store; archive is an append-only JSONL file."""

    def __init__(self, archive_path: str | Path | None = None, clock=None):
        self._records: dict[str, StoreRecord] = {}
        self._lock = threading.Lock()
        self._archive_path = Path(archive_path) if archive_path else None
        self._clock = clock or _now_ms

    def put(self, txn: TollTransaction) -> None:
        with self._lock:
            existing = self._records.get(txn.transaction_id)
            if existing is not None:
                if existing.txn.to_json() == txn.to_json():
                    return
                raise DuplicateTransactionError(
                    f"transaction {txn.transaction_id} exists with different payload"
                )
            self._records[txn.transaction_id] = StoreRecord(txn=txn, inserted_at=self._clock())

    def get(self, transaction_id: str) -> TollTransaction:
        with self._lock:
            record = self._records.get(transaction_id)
            if record is None:
                raise TransactionNotFoundError(transaction_id)
            return record.txn

    def contains(self, transaction_id: str) -> bool:
        with self._lock:
            return transaction_id in self._records

    def recent(self, window_size: int) -> list[TollTransaction]:
        if window_size < 1:
            raise ValueError("window_size must be >= 1")
        with self._lock:
            out = []
            for record in reversed(self._records.values()):
                if record.archived:
                    continue
                out.append(record.txn)
                if len(out) == window_size:
                    break
            return out

    def scan(self) -> list[TollTransaction]:
        with self._lock:
            return [r.txn for r in reversed(self._records.values()) if not r.archived]

    def amend_plate(
        self, transaction_id: str, corrected_text: str, operator_id: str
    ) -> TollTransaction:
        with self._lock:
            record = self._records.get(transaction_id)
            if record is None:
                raise TransactionNotFoundError(transaction_id)
            if record.archived:
                raise ArchivedRecordError(transaction_id)
            txn = record.txn
            if txn.plate_status == "ManuallyCorrected" and txn.plate_text == corrected_text:
                return txn  # idempotent re-amendment, no extra audit entry
            record.txn = txn.with_amendment(corrected_text, operator_id, self._clock())
            return record.txn

    def archive_and_cleanup(
        self, now_ms: float, archive_age_ms: float, delete_age_ms: float
    ) -> tuple[int, int]:
        """Two-phase: archive-then-flag, then delete expired archived records.

        The archive write happens before any flag or deletion; an I/O failure
        aborts the whole operation with the store unchanged.
        """
        if archive_age_ms >= delete_age_ms:
            raise ValueError("archive_age_ms must be < delete_age_ms")
        with self._lock:
            to_archive = [
                r
                for r in self._records.values()
                if not r.archived and now_ms - r.inserted_at > archive_age_ms
            ]
            if to_archive:
                self._append_archive([r.txn for r in to_archive])
            for record in to_archive:
                record.archived = True
            to_delete = [
                key
                for key, r in self._records.items()
                if r.archived and now_ms - r.inserted_at > delete_age_ms
            ]
            for key in to_delete:
                del self._records[key]
            return len(to_archive), len(to_delete)

    def _append_archive(self, txns: list[TollTransaction]) -> None:
        if self._archive_path is None:
            raise StoreError("archive path not configured")
        with open(self._archive_path, "a", encoding="utf-8") as fh:
            for txn in txns:
                fh.write(txn.to_json())
                fh.write("\n")
            fh.flush()


class RemoteStoreClient(TransactionStore):
    """Speaks the line-based text protocol of the external key-value service.

    One request in flight at a time per client; a lock makes the client safe
    to share between threads.
    """

    def __init__(self, address: str, timeout: float = 10.0):
        host, _, port = address.rpartition(":")
        self._addr = (host or "127.0.0.1", int(port))
        self._timeout = timeout
        self._lock = threading.Lock()
        self._sock: socket.socket | None = None
        self._reader = None

    def _connect(self) -> None:
        sock = socket.create_connection(self._addr, timeout=self._timeout)
        self._sock = sock
        self._reader = sock.makefile("r", encoding="utf-8")

    def close(self) -> None:
        with self._lock:
            if self._sock is not None:
                try:
                    self._sock.close()
                finally:
                    self._sock = None
                    self._reader = None

    def _request(self, command: str, payload=None) -> object:
        line = command if payload is None else f"{command} {json.dumps(payload, separators=(',', ':'))}"
        with self._lock:
            if self._sock is None:
                self._connect()
            assert self._sock is not None and self._reader is not None
            self._sock.sendall(line.encode("utf-8") + b"\n")
            response = self._reader.readline()
            if not response:
                self.close()
                raise StoreError("store connection closed")
        response = response.rstrip("\n")
        if response.startswith("+OK"):
            body = response[3:].strip()
            return json.loads(body) if body else None
        if response.startswith("-ERR"):
            _, _, rest = response.partition(" ")
            code, _, message = rest.partition(" ")
            raise _ERROR_CODES.get(code, StoreError)(message)
        raise StoreError(f"malformed store response: {response!r}")

    def ping(self) -> bool:
        return self._request("PING") == "pong"

    def put(self, txn: TollTransaction) -> None:
        self._request("PUT", txn.to_dict())

    def get(self, transaction_id: str) -> TollTransaction:
        return TollTransaction.from_dict(self._request("GET", {"transaction_id": transaction_id}))

    def contains(self, transaction_id: str) -> bool:
        return bool(self._request("CONTAINS", {"transaction_id": transaction_id}))

    def recent(self, window_size: int) -> list[TollTransaction]:
        if window_size < 1:
            raise ValueError("window_size must be >= 1")
        rows = self._request("RECENT", {"window_size": window_size})
        return [TollTransaction.from_dict(r) for r in rows]

    def scan(self) -> list[TollTransaction]:
        return [TollTransaction.from_dict(r) for r in self._request("SCAN")]

    def amend_plate(
        self, transaction_id: str, corrected_text: str, operator_id: str
    ) -> TollTransaction:
        row = self._request(
            "AMEND",
            {
                "transaction_id": transaction_id,
                "corrected_text": corrected_text,
                "operator_id": operator_id,
            },
        )
        return TollTransaction.from_dict(row)

    def archive_and_cleanup(
        self, now_ms: float, archive_age_ms: float, delete_age_ms: float
    ) -> tuple[int, int]:
        row = self._request(
            "CLEANUP",
            {
                "now_ms": now_ms,
                "archive_age_ms": archive_age_ms,
                "delete_age_ms": delete_age_ms,
            },
        )
        return int(row["archived"]), int(row["deleted"])


_ERROR_CODES: dict[str, type[StoreError]] = {
    "conflict": DuplicateTransactionError,
    "not-found": TransactionNotFoundError,
    "archived": ArchivedRecordError,
    "bad-request": StoreError,
}


def open_store(
    address: str | None, archive_path: str | Path | None = None, clock=None
) -> TransactionStore:
    """Embedded store unless an external address is configured."""
    if address:
        return RemoteStoreClient(address)
    return EmbeddedStore(archive_path=archive_path, clock=clock)
