/** Gateway client: REST hydration, event socket, reconnect, corrections.
 *
 * The fold in state.ts is pure; this module owns all I/O and timers. One
 * socket per client, hydration strictly before subscription, and any
 * sequence anomaly tears the connection down and starts the cycle over
 * rather than patching state in place. Corrections are optimistic: the
 * draft renders immediately, the server's PlateUpdated event settles it.
 */

import type { DashboardState } from "./state";
import {
  applyEvent,
  clearDraft,
  hydrate,
  initialState,
  openDraft,
  rejectDraft,
  setConnection,
} from "./state";
import type { EventMessage, StatsSnapshot, TransactionRow } from "./types";

export interface WebSocketLike {
  onopen: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  close(): void;
}

export interface DashboardClientOptions {
  windowSize?: number;
  reconnectBaseMs?: number;
  reconnectMaxMs?: number;
  /** Defaults to globalThis.WebSocket; node callers pass the `ws` class. */
  webSocketFactory?: (url: string) => WebSocketLike;
  fetchImpl?: typeof fetch;
  operatorId?: string;
}

export type CorrectionResult = { ok: true } | { ok: false; error: string };

type Listener = (state: DashboardState) => void;

export class DashboardClient {
  private state: DashboardState;
  private listeners = new Set<Listener>();
  private socket: WebSocketLike | null = null;
  private retryMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private closed = false;
  private connecting = false;

  private readonly baseUrl: string;
  private readonly wsUrl: string;
  private readonly fetchImpl: typeof fetch;
  private readonly makeSocket: (url: string) => WebSocketLike;
  private readonly baseMs: number;
  private readonly maxMs: number;
  private readonly operatorId: string;

  constructor(baseUrl: string, options: DashboardClientOptions = {}) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.wsUrl = this.baseUrl.replace(/^http/, "ws") + "/ws/vehicles";
    this.fetchImpl = options.fetchImpl ?? fetch;
    const globalSocket = (globalThis as { WebSocket?: new (url: string) => WebSocketLike }).WebSocket;
    const factory = options.webSocketFactory ?? (globalSocket && ((url: string) => new globalSocket(url)));
    if (!factory) throw new Error("no WebSocket implementation; pass webSocketFactory");
    this.makeSocket = factory;
    this.baseMs = options.reconnectBaseMs ?? 250;
    this.maxMs = options.reconnectMaxMs ?? 4000;
    this.retryMs = this.baseMs;
    this.operatorId = options.operatorId ?? "operator";
    this.state = initialState(options.windowSize ?? 50);
  }

  getState(): DashboardState {
    return this.state;
  }

  onChange(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  connect(): void {
    if (this.closed) throw new Error("client is closed");
    void this.cycle();
  }

  close(): void {
    this.closed = true;
    if (this.timer) clearTimeout(this.timer);
    this.teardownSocket();
    this.setState(setConnection(this.state, "disconnected"));
  }

  async submitCorrection(
    transactionId: string,
    text: string,
    override = false,
  ): Promise<CorrectionResult> {
    const normalized = text.trim().toUpperCase(); // gateway normalizes the same way
    this.setState(openDraft(this.state, transactionId, normalized, this.operatorId, Date.now()));
    let response: Response;
    try {
      response = await this.fetchImpl(
        `${this.baseUrl}/transactions/${encodeURIComponent(transactionId)}/plate`,
        {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify({ text: normalized, operator_id: this.operatorId, override }),
        },
      );
    } catch (error) {
      this.setState(rejectDraft(this.state, transactionId, String(error)));
      return { ok: false, error: String(error) };
    }
    if (!response.ok) {
      const error = await describeFailure(response);
      this.setState(rejectDraft(this.state, transactionId, error));
      return { ok: false, error };
    }
    // accepted; the PlateUpdated broadcast settles the draft
    return { ok: true };
  }

  /** Drop a rejected (or abandoned) draft, restoring the prior row text. */
  dismissDraft(transactionId: string): void {
    this.setState(clearDraft(this.state, transactionId));
  }

  // ------------------------------------------------------------------ wiring

  private setState(next: DashboardState): void {
    if (next === this.state) return;
    this.state = next;
    for (const listener of this.listeners) listener(next);
  }

  private async cycle(): Promise<void> {
    if (this.closed || this.connecting) return;
    this.connecting = true;
    this.setState(setConnection(this.state, "connecting"));
    try {
      const [transactions, stats] = await Promise.all([this.fetchWindow(), this.fetchStats()]);
      if (this.closed) return;
      this.setState(hydrate(this.state, transactions, stats));
      this.openSocket();
    } catch {
      this.connecting = false;
      this.setState(setConnection(this.state, "disconnected"));
      this.scheduleRetry();
    }
  }

  private async fetchWindow(): Promise<TransactionRow[]> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/transactions?window=${this.state.windowSize}`,
    );
    if (!response.ok) throw new Error(`GET /transactions -> ${response.status}`);
    const body = (await response.json()) as { transactions: TransactionRow[] };
    return body.transactions;
  }

  private async fetchStats(): Promise<StatsSnapshot> {
    const response = await this.fetchImpl(`${this.baseUrl}/stats`);
    if (!response.ok) throw new Error(`GET /stats -> ${response.status}`);
    return (await response.json()) as StatsSnapshot;
  }

  private openSocket(): void {
    const socket = this.makeSocket(this.wsUrl);
    this.socket = socket;
    socket.onopen = () => {
      this.connecting = false;
      this.retryMs = this.baseMs;
      this.setState(setConnection(this.state, "live"));
    };
    socket.onmessage = (event) => {
      const message = JSON.parse(String(event.data)) as EventMessage;
      this.setState(applyEvent(this.state, message));
      if (this.state.needsRehydrate) this.resync();
    };
    socket.onerror = () => {
      // the close handler owns recovery
    };
    socket.onclose = () => {
      if (this.socket !== socket) return; // superseded
      this.socket = null;
      this.connecting = false;
      if (this.closed) return;
      this.setState(setConnection(this.state, "disconnected"));
      this.scheduleRetry();
    };
  }

  /** Sequence anomaly: drop the socket and redo hydrate-then-subscribe. */
  private resync(): void {
    this.teardownSocket();
    this.connecting = false;
    if (!this.closed) {
      this.setState(setConnection(this.state, "disconnected"));
      this.scheduleRetry();
    }
  }

  private teardownSocket(): void {
    const socket = this.socket;
    if (!socket) return;
    this.socket = null;
    socket.onclose = null;
    socket.onmessage = null;
    try {
      socket.close();
    } catch {
      // already dead
    }
  }

  private scheduleRetry(): void {
    if (this.closed || this.timer) return;
    const delay = this.retryMs;
    this.retryMs = Math.min(this.retryMs * 2, this.maxMs);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.cycle();
    }, delay);
  }
}

async function describeFailure(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    if (body.detail !== undefined) return JSON.stringify(body.detail);
  } catch {
    // non-JSON error body
  }
  return `HTTP ${response.status}`;
}
