/** Wire types for the toll lane gateway. Field names match the JSON exactly. */

export type PlateStatus = "Locked" | "Scanning" | "ManuallyCorrected";

export type TrackStatus = "Tentative" | "Active" | "Occluded" | "Exited";

export interface AuditEntry {
  operator_id: string;
  old_text: string | null;
  new_text: string;
  time_ms: number;
}

export interface TransactionRow {
  transaction_id: string;
  track_id: number;
  plate_text: string | null;
  fused_confidence: number;
  plate_status: PlateStatus;
  axle_count: number;
  vehicle_class: string;
  toll_amount: number;
  entry_timestamp: number;
  exit_timestamp: number;
  review_required: boolean;
  created_at: number;
  audit: AuditEntry[];
}

export interface StatsSnapshot {
  live_tracks: number;
  transactions_today: number;
  mean_locked_confidence: number;
  review_queue_depth: number;
  per_class_counts: Record<string, number>;
}

export interface TrackEventPayload {
  event_type: "Created" | "Activated" | "Occluded" | "Reacquired" | "Exited";
  track_id: number;
  frame_index: number;
  timestamp_ms: number;
  /** present on TrackUpdated, absent on TrackCreated */
  status?: TrackStatus;
}

/** Pipeline consensus progress; `transaction_id` appears only on the
 * gateway's post-correction broadcast. */
export interface PlateUpdatePayload {
  track_id: number;
  text: string | null;
  fused_confidence: number;
  status: PlateStatus;
  transaction_id?: string;
  review_required?: boolean;
}

export interface AxleUpdatePayload {
  track_id: number;
  validated_count: number;
  temporal_confidence: number;
}

export type EventMessage =
  | { type: "TrackCreated"; sequence_number: number; payload: TrackEventPayload }
  | { type: "TrackUpdated"; sequence_number: number; payload: TrackEventPayload }
  | { type: "PlateUpdated"; sequence_number: number; payload: PlateUpdatePayload }
  | { type: "AxleUpdated"; sequence_number: number; payload: AxleUpdatePayload }
  | { type: "TransactionFinalized"; sequence_number: number; payload: TransactionRow }
  | { type: "StatsSnapshot"; sequence_number: number; payload: StatsSnapshot };

export type EventType = EventMessage["type"];

export const EVENT_TYPES: readonly EventType[] = [
  "TrackCreated",
  "TrackUpdated",
  "PlateUpdated",
  "AxleUpdated",
  "TransactionFinalized",
  "StatsSnapshot",
];
