/** Pure view model: DashboardState in, renderable structure out.
 *
 * Row color is a function of plate_status and nothing else; that is the
 * operator-attention contract (yellow rows need eyes on them). The audit
 * trail column replaces a plate thumbnail: this system carries no pixels,
 * so the chain of corrections (who changed what, from what) is shown instead.
 */

import type { DashboardState, LiveTrack } from "./state";
import type { PlateStatus, TransactionRow } from "./types";

export type RowColor = "green" | "yellow" | "blue";

export const STATUS_COLORS: Record<PlateStatus, RowColor> = {
  Locked: "green",
  Scanning: "yellow",
  ManuallyCorrected: "blue",
};

export interface RenderedRow {
  transactionId: string;
  plate: string;
  color: RowColor;
  confidence: string;
  vehicleClass: string;
  axles: number;
  toll: string;
  review: boolean;
  dwellSeconds: string;
  auditTrail: string;
  draft: { text: string; error: string | null } | null;
}

export interface RenderedTrack {
  trackId: number;
  status: string;
  plate: string;
  axles: string;
}

export interface RenderedView {
  banner: string | null;
  rows: RenderedRow[];
  liveTracks: RenderedTrack[];
  statsLine: string;
}

const UNREAD = "(unread)";

export function render(state: DashboardState): RenderedView {
  return {
    banner: state.connection === "live" ? null : `connection: ${state.connection}`,
    rows: state.transactions.map((row) => renderRow(row, state)),
    liveTracks: Object.values(state.tracks)
      .sort((a, b) => a.trackId - b.trackId)
      .map(renderTrack),
    statsLine: renderStats(state),
  };
}

function renderRow(row: TransactionRow, state: DashboardState): RenderedRow {
  const draft = state.drafts[row.transaction_id];
  return {
    transactionId: row.transaction_id,
    plate: row.plate_text ?? UNREAD,
    color: STATUS_COLORS[row.plate_status],
    confidence: row.fused_confidence.toFixed(2),
    vehicleClass: row.vehicle_class,
    axles: row.axle_count,
    toll: formatToll(row.toll_amount),
    review: row.review_required,
    dwellSeconds: ((row.exit_timestamp - row.entry_timestamp) / 1000).toFixed(1),
    auditTrail: row.audit
      .map((entry) => `${entry.old_text ?? UNREAD}->${entry.new_text} by ${entry.operator_id}`)
      .join("; "),
    draft: draft ? { text: draft.text, error: draft.error } : null,
  };
}

function renderTrack(track: LiveTrack): RenderedTrack {
  return {
    trackId: track.trackId,
    status: track.status,
    plate:
      track.plateText === null
        ? UNREAD
        : `${track.plateText} ${track.plateStatus ?? ""} ${track.plateConfidence.toFixed(2)}`.trim(),
    axles: track.axleCount === null ? "?" : `${track.axleCount} (${track.axleConfidence.toFixed(2)})`,
  };
}

function renderStats(state: DashboardState): string {
  const s = state.stats;
  if (!s) return "stats: n/a";
  const perClass = Object.entries(s.per_class_counts)
    .sort(([a], [b]) => (a < b ? -1 : 1))
    .map(([label, count]) => `${label}=${count}`)
    .join(" ");
  return (
    `live=${s.live_tracks} today=${s.transactions_today} ` +
    `locked_conf=${s.mean_locked_confidence.toFixed(3)} review=${s.review_queue_depth}` +
    (perClass ? ` | ${perClass}` : "")
  );
}

function formatToll(minorUnits: number): string {
  return (minorUnits / 100).toFixed(2);
}

/** Plain-text table for terminals and snapshot diffs. */
export function renderText(state: DashboardState): string {
  const view = render(state);
  const lines: string[] = [];
  if (view.banner) lines.push(`[${view.banner}]`);
  lines.push(view.statsLine);
  for (const row of view.rows) {
    const flags = [row.review ? "REVIEW" : "", row.draft ? `draft:${row.draft.text}` : ""]
      .filter(Boolean)
      .join(" ");
    lines.push(
      `${row.color.padEnd(6)} ${row.transactionId} ${row.plate.padEnd(9)} ` +
        `${row.confidence} ${row.vehicleClass.padEnd(12)} ${row.toll.padStart(6)}` +
        (flags ? ` ${flags}` : ""),
    );
  }
  for (const track of view.liveTracks) {
    lines.push(`~ track ${track.trackId} ${track.status} plate=${track.plate} axles=${track.axles}`);
  }
  return lines.join("\n");
}
