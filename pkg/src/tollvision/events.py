"""Typed messages pushed to dashboard clients.

Payload schemas are fixed per type; sequence numbers are stamped per
connection at delivery time, not here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class EventType(enum.Enum):
    TRACK_CREATED = "TrackCreated"
    TRACK_UPDATED = "TrackUpdated"
    PLATE_UPDATED = "PlateUpdated"
    AXLE_UPDATED = "AxleUpdated"
    TRANSACTION_FINALIZED = "TransactionFinalized"
    STATS_SNAPSHOT = "StatsSnapshot"


@dataclass(frozen=True, slots=True)
class EventMessage:
    type: EventType
    payload: dict

    def to_dict(self, sequence_number: int) -> dict:
        return {
            "type": self.type.value,
            "sequence_number": sequence_number,
            "payload": self.payload,
        }
