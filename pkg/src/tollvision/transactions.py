"""The persisted toll transaction record and its wire/file serialization.

All timestamps are milliseconds: entry/exit are stream-relative, created_at
is wall-clock epoch ms (injectable for deterministic replays).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace


@dataclass(frozen=True, slots=True)
class AuditEntry:
    operator_id: str
    old_text: str | None
    new_text: str
    time_ms: float

    def to_dict(self) -> dict:
        return {
            "operator_id": self.operator_id,
            "old_text": self.old_text,
            "new_text": self.new_text,
            "time_ms": round(self.time_ms, 6),
        }


@dataclass(frozen=True, slots=True)
class TollTransaction:
    transaction_id: str
    track_id: int
    plate_text: str | None
    fused_confidence: float
    plate_status: str  # Scanning | Locked | ManuallyCorrected at finalization
    axle_count: int
    vehicle_class: str
    toll_amount: int  # currency minor units
    entry_timestamp: float
    exit_timestamp: float
    review_required: bool
    created_at: float
    audit: tuple[AuditEntry, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.exit_timestamp < self.entry_timestamp:
            raise ValueError("exit_timestamp must be >= entry_timestamp")

    def to_dict(self) -> dict:
        return {
            "transaction_id": self.transaction_id,
            "track_id": self.track_id,
            "plate_text": self.plate_text,
            "fused_confidence": round(self.fused_confidence, 6),
            "plate_status": self.plate_status,
            "axle_count": self.axle_count,
            "vehicle_class": self.vehicle_class,
            "toll_amount": self.toll_amount,
            "entry_timestamp": round(self.entry_timestamp, 6),
            "exit_timestamp": round(self.exit_timestamp, 6),
            "review_required": self.review_required,
            "created_at": round(self.created_at, 6),
            "audit": [entry.to_dict() for entry in self.audit],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @staticmethod
    def from_dict(payload: dict) -> "TollTransaction":
        return TollTransaction(
            transaction_id=payload["transaction_id"],
            track_id=int(payload["track_id"]),
            plate_text=payload["plate_text"],
            fused_confidence=float(payload["fused_confidence"]),
            plate_status=payload["plate_status"],
            axle_count=int(payload["axle_count"]),
            vehicle_class=payload["vehicle_class"],
            toll_amount=int(payload["toll_amount"]),
            entry_timestamp=float(payload["entry_timestamp"]),
            exit_timestamp=float(payload["exit_timestamp"]),
            review_required=bool(payload["review_required"]),
            created_at=float(payload["created_at"]),
            audit=tuple(
                AuditEntry(
                    operator_id=a["operator_id"],
                    old_text=a["old_text"],
                    new_text=a["new_text"],
                    time_ms=float(a["time_ms"]),
                )
                for a in payload.get("audit", [])
            ),
        )

    @staticmethod
    def from_json(line: str) -> "TollTransaction":
        return TollTransaction.from_dict(json.loads(line))

    def with_amendment(self, corrected_text: str, operator_id: str, time_ms: float) -> "TollTransaction":
        entry = AuditEntry(
            operator_id=operator_id,
            old_text=self.plate_text,
            new_text=corrected_text,
            time_ms=time_ms,
        )
        return replace(
            self,
            plate_text=corrected_text,
            plate_status="ManuallyCorrected",
            review_required=False,
            audit=self.audit + (entry,),
        )
