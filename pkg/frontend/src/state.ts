/** Dashboard state as a pure fold over (hydration, event stream).
 *
 * Every transition returns a fresh state object and never mutates its input,
 * so replaying a recorded stream is exactly reproducible and React-style
 * change detection stays cheap. Sequence numbers are per connection and
 * gapless; anything out of order flips `needsRehydrate` instead of guessing.
 */

import type {
  EventMessage,
  PlateStatus,
  StatsSnapshot,
  TrackStatus,
  TransactionRow,
} from "./types";

export type ConnectionStatus = "connecting" | "live" | "disconnected";

export interface LiveTrack {
  trackId: number;
  status: TrackStatus;
  lastFrame: number;
  plateText: string | null;
  plateStatus: PlateStatus | null;
  plateConfidence: number;
  axleCount: number | null;
  axleConfidence: number;
}

export interface CorrectionDraft {
  text: string;
  operatorId: string;
  submittedAt: number;
  error: string | null;
}

export interface DashboardState {
  connection: ConnectionStatus;
  windowSize: number;
  transactions: TransactionRow[]; // newest first, length <= windowSize
  tracks: Record<number, LiveTrack>;
  stats: StatsSnapshot | null;
  drafts: Record<string, CorrectionDraft>;
  lastSequence: number;
  needsRehydrate: boolean;
}

export function initialState(windowSize = 50): DashboardState {
  if (windowSize < 1) throw new Error("windowSize must be >= 1");
  return {
    connection: "connecting",
    windowSize,
    transactions: [],
    tracks: {},
    stats: null,
    drafts: {},
    lastSequence: 0,
    needsRehydrate: false,
  };
}

/** Replace table and stats from a REST snapshot; live tracks and drafts
 * survive (they are not part of the REST surface). Resets the sequence
 * cursor: hydration always pairs with a fresh socket. */
export function hydrate(
  state: DashboardState,
  transactions: TransactionRow[],
  stats: StatsSnapshot | null,
): DashboardState {
  return {
    ...state,
    transactions: transactions.slice(0, state.windowSize),
    stats,
    lastSequence: 0,
    needsRehydrate: false,
  };
}

export function setConnection(state: DashboardState, connection: ConnectionStatus): DashboardState {
  return state.connection === connection ? state : { ...state, connection };
}

export function applyEvent(state: DashboardState, message: EventMessage): DashboardState {
  if (message.sequence_number !== state.lastSequence + 1) {
    // duplicate, stale or gapped delivery; the caller re-hydrates over REST
    return state.needsRehydrate ? state : { ...state, needsRehydrate: true };
  }
  const next = applyPayload(state, message);
  return { ...next, lastSequence: message.sequence_number };
}

function applyPayload(state: DashboardState, message: EventMessage): DashboardState {
  switch (message.type) {
    case "TrackCreated": {
      const p = message.payload;
      const track: LiveTrack = {
        trackId: p.track_id,
        status: "Tentative",
        lastFrame: p.frame_index,
        plateText: null,
        plateStatus: null,
        plateConfidence: 0,
        axleCount: null,
        axleConfidence: 0,
      };
      return { ...state, tracks: { ...state.tracks, [p.track_id]: track } };
    }
    case "TrackUpdated": {
      const p = message.payload;
      if (p.status === "Exited") {
        const { [p.track_id]: _gone, ...tracks } = state.tracks;
        return { ...state, tracks };
      }
      const existing = state.tracks[p.track_id];
      if (!existing) return state; // update for a track created before we connected
      const track: LiveTrack = { ...existing, status: p.status ?? existing.status, lastFrame: p.frame_index };
      return { ...state, tracks: { ...state.tracks, [p.track_id]: track } };
    }
    case "PlateUpdated": {
      const p = message.payload;
      if (p.transaction_id !== undefined) return applyCorrection(state, p.transaction_id, p);
      const existing = state.tracks[p.track_id];
      if (!existing) return state;
      const track: LiveTrack = {
        ...existing,
        plateText: p.text,
        plateStatus: p.status,
        plateConfidence: p.fused_confidence,
      };
      return { ...state, tracks: { ...state.tracks, [p.track_id]: track } };
    }
    case "AxleUpdated": {
      const p = message.payload;
      const existing = state.tracks[p.track_id];
      if (!existing) return state;
      const track: LiveTrack = { ...existing, axleCount: p.validated_count, axleConfidence: p.temporal_confidence };
      return { ...state, tracks: { ...state.tracks, [p.track_id]: track } };
    }
    case "TransactionFinalized": {
      const row = message.payload;
      const rest = state.transactions.filter((t) => t.transaction_id !== row.transaction_id);
      return { ...state, transactions: [row, ...rest].slice(0, state.windowSize) };
    }
    case "StatsSnapshot":
      return { ...state, stats: message.payload };
  }
}

function applyCorrection(
  state: DashboardState,
  transactionId: string,
  p: { text: string | null; fused_confidence: number; status: PlateStatus; review_required?: boolean },
): DashboardState {
  const transactions = state.transactions.map((row) =>
    row.transaction_id === transactionId
      ? {
          ...row,
          plate_text: p.text,
          fused_confidence: p.fused_confidence,
          plate_status: p.status,
          review_required: p.review_required ?? row.review_required,
        }
      : row,
  );
  // the server event is the source of truth; a matching draft is settled
  const draft = state.drafts[transactionId];
  if (draft && draft.text === p.text) {
    const { [transactionId]: _settled, ...drafts } = state.drafts;
    return { ...state, transactions, drafts };
  }
  return { ...state, transactions };
}

export function openDraft(
  state: DashboardState,
  transactionId: string,
  text: string,
  operatorId: string,
  submittedAt: number,
): DashboardState {
  const draft: CorrectionDraft = { text, operatorId, submittedAt, error: null };
  return { ...state, drafts: { ...state.drafts, [transactionId]: draft } };
}

/** Rejection path: the row never changed, the draft carries the inline error. */
export function rejectDraft(state: DashboardState, transactionId: string, error: string): DashboardState {
  const draft = state.drafts[transactionId];
  if (!draft) return state;
  return { ...state, drafts: { ...state.drafts, [transactionId]: { ...draft, error } } };
}

export function clearDraft(state: DashboardState, transactionId: string): DashboardState {
  if (!(transactionId in state.drafts)) return state;
  const { [transactionId]: _gone, ...drafts } = state.drafts;
  return { ...state, drafts };
}

export function replay(
  windowSize: number,
  hydration: { transactions: TransactionRow[]; stats: StatsSnapshot | null },
  events: EventMessage[],
): DashboardState {
  let state = hydrate(initialState(windowSize), hydration.transactions, hydration.stats);
  state = setConnection(state, "live");
  for (const event of events) state = applyEvent(state, event);
  return state;
}
