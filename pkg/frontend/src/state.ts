import type { ApiEvent, ClientRow, PerfSample, StatusInfo } from "./types.js";

export interface Notice {
  seq: number;
  kind: "block" | "anomaly" | "overflow";
  text: string;
}

export interface DashboardState {
  clients: ClientRow[];
  status: StatusInfo | null;
  perf: PerfSample[];
  notices: Notice[];
  lastSeq: number;
  /** Set when the API stopped answering; the UI shows stale data plainly
   * instead of silently emptying. */
  stale: boolean;
  /** Controls with an in-flight mutation, disabled until it resolves. */
  pendingActions: Set<string>;
}

export function initialState(): DashboardState {
  return {
    clients: [],
    status: null,
    perf: [],
    notices: [],
    lastSeq: 0,
    stale: false,
    pendingActions: new Set(),
  };
}

const PERF_KEEP = 720; // one hour of 5 s samples

export function applyClients(state: DashboardState, clients: ClientRow[]): DashboardState {
  return { ...state, clients, stale: false };
}

export function applyStatus(state: DashboardState, status: StatusInfo): DashboardState {
  return { ...state, status, stale: false };
}

export function applyPerfSnapshot(state: DashboardState, perf: PerfSample[]): DashboardState {
  return { ...state, perf: perf.slice(-PERF_KEEP), stale: false };
}

export function markStale(state: DashboardState): DashboardState {
  return { ...state, stale: true };
}

/** Apply one event from the stream. Events arrive in seq order; duplicates
 * (replay after reconnect) are dropped by seq, making application idempotent. */
export function applyEvent(state: DashboardState, event: ApiEvent): DashboardState {
  if (event.seq <= state.lastSeq) {
    return state;
  }
  const next = { ...state, lastSeq: event.seq };
  switch (event.type) {
    case "perf_sample": {
      const sample = event as unknown as PerfSample;
      next.perf = [...state.perf, sample].slice(-PERF_KEEP);
      break;
    }
    case "block":
    case "anomaly": {
      const who = event.identifier ?? event.client_ip ?? "unknown client";
      next.notices = [
        ...state.notices,
        { seq: event.seq, kind: event.type, text: `${who}: ${event.detail ?? ""}` },
      ];
      break;
    }
    default:
      // client_joined/left, session and unblock events change server-side
      // state; the table re-renders from the next snapshot fetch.
      break;
  }
  return next;
}

export function dismissNotice(state: DashboardState, seq: number): DashboardState {
  return { ...state, notices: state.notices.filter((n) => n.seq !== seq) };
}

export function withPending(state: DashboardState, action: string): DashboardState {
  const pendingActions = new Set(state.pendingActions);
  pendingActions.add(action);
  return { ...state, pendingActions };
}

export function withoutPending(state: DashboardState, action: string): DashboardState {
  const pendingActions = new Set(state.pendingActions);
  pendingActions.delete(action);
  return { ...state, pendingActions };
}

/** Events that should trigger a client-table refetch. */
export function needsClientRefresh(event: ApiEvent): boolean {
  return [
    "client_joined", "client_left", "session_opened", "session_closed",
    "block", "unblock",
  ].includes(event.type);
}
