import type { ApiEvent } from "./types.js";

/** Minimal surface of EventSource the feed needs; injectable for tests. */
export interface EventSourceLike {
  addEventListener(type: string, listener: (ev: MessageEvent<string>) => void): void;
  close(): void;
  onerror: ((ev: unknown) => void) | null;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

const EVENT_TYPES = [
  "client_joined", "client_left", "block", "unblock", "anomaly",
  "perf_sample", "session_opened", "session_closed", "overflow",
];

/** Subscribes to the SSE stream and hands each event to `onEvent` in seq
 * order. EventSource resumes with Last-Event-ID on reconnect; the server
 * replays from there, and duplicate seqs are dropped by the state layer.
 * An `overflow` frame means the server evicted this subscriber; the feed
 * reconnects from scratch and signals that a snapshot refetch is needed. */
export class EventFeed {
  private source: EventSourceLike | null = null;

  constructor(
    private readonly url: string,
    private readonly onEvent: (event: ApiEvent) => void,
    private readonly onResync: () => void,
    private readonly makeSource: EventSourceFactory =
      (u) => new EventSource(u) as unknown as EventSourceLike,
  ) {}

  start(): void {
    const source = this.makeSource(this.url);
    this.source = source;
    for (const type of EVENT_TYPES) {
      source.addEventListener(type, (ev) => this.handle(type, ev.data));
    }
    source.onerror = () => {
      // EventSource reconnects by itself; flag the data as possibly stale.
      this.onResync();
    };
  }

  private handle(type: string, data: string): void {
    if (type === "overflow") {
      this.stop();
      this.onResync();
      this.start();
      return;
    }
    let event: ApiEvent;
    try {
      event = JSON.parse(data) as ApiEvent;
    } catch {
      return; // malformed frame, nothing to apply
    }
    this.onEvent({ ...event, type });
  }

  stop(): void {
    this.source?.close();
    this.source = null;
  }
}
