import { describe, expect, it } from "vitest";

import { EventFeed, type EventSourceLike } from "../src/feed.js";
import type { ApiEvent } from "../src/types.js";

class FakeSource implements EventSourceLike {
  listeners = new Map<string, (ev: MessageEvent<string>) => void>();
  closed = false;
  onerror: ((ev: unknown) => void) | null = null;

  addEventListener(type: string, listener: (ev: MessageEvent<string>) => void): void {
    this.listeners.set(type, listener);
  }

  close(): void {
    this.closed = true;
  }

  emit(type: string, data: string): void {
    this.listeners.get(type)?.({ data } as MessageEvent<string>);
  }
}

describe("event feed", () => {
  it("parses frames and tags them with the SSE event type", () => {
    const received: ApiEvent[] = [];
    const sources: FakeSource[] = [];
    const feed = new EventFeed("/api/events", (e) => received.push(e), () => {}, () => {
      const s = new FakeSource();
      sources.push(s);
      return s;
    });
    feed.start();
    sources[0].emit("block", JSON.stringify({
      seq: 3, timestamp: 1.0, client_ip: "192.168.43.10", detail: "quota",
    }));
    expect(received).toHaveLength(1);
    expect(received[0].type).toBe("block");
    expect(received[0].seq).toBe(3);
  });

  it("ignores malformed frames without dying", () => {
    const received: ApiEvent[] = [];
    const source = new FakeSource();
    const feed = new EventFeed("/api/events", (e) => received.push(e), () => {},
      () => source);
    feed.start();
    source.emit("perf_sample", "{not json");
    source.emit("perf_sample", JSON.stringify({ seq: 1, timestamp: 1.0 }));
    expect(received).toHaveLength(1);
  });

  it("reconnects and requests a resync after a server overflow frame", () => {
    const sources: FakeSource[] = [];
    let resyncs = 0;
    const feed = new EventFeed("/api/events", () => {}, () => { resyncs += 1; }, () => {
      const s = new FakeSource();
      sources.push(s);
      return s;
    });
    feed.start();
    sources[0].emit("overflow", "{}");
    expect(sources[0].closed).toBe(true);
    expect(sources).toHaveLength(2); // reconnected with a fresh source
    expect(resyncs).toBe(1);
  });

  it("flags a resync on transport errors", () => {
    const source = new FakeSource();
    let resyncs = 0;
    const feed = new EventFeed("/api/events", () => {}, () => { resyncs += 1; },
      () => source);
    feed.start();
    source.onerror?.(new Event("error"));
    expect(resyncs).toBe(1);
  });
});
