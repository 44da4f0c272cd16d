"""Event bus: sequenced notifications fanned out to control-API subscribers.

Every observable state transition (client join/leave, block/unblock, anomaly,
perf sample, session open/close) is published exactly once with a strictly
increasing sequence number.  Subscribers get bounded queues; a consumer that
falls behind its buffer is closed with an overflow notice instead of ever
blocking producers.
"""

from __future__ import annotations

import queue
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Optional

EVENT_TYPES = (
    "client_joined",
    "client_left",
    "block",
    "unblock",
    "anomaly",
    "perf_sample",
    "session_opened",
    "session_closed",
)

REPLAY_BUFFER = 1000
SUBSCRIBER_QUEUE = 256

# Sentinel pushed into a subscriber queue when it lagged past its buffer.
OVERFLOW = object()


@dataclass(frozen=True)
class ApiEvent:
    seq: int
    type: str
    payload: dict[str, Any]
    timestamp: float

    def as_dict(self) -> dict[str, Any]:
        return {"seq": self.seq, "type": self.type,
                "timestamp": self.timestamp, **self.payload}


class EventBus:
    def __init__(self, clock: Callable[[], float] = time.time,
                 buffer_size: int = REPLAY_BUFFER):
        self._clock = clock
        self._lock = threading.Lock()
        self._seq = 0
        self._buffer: deque[ApiEvent] = deque(maxlen=buffer_size)
        self._subscribers: list[queue.Queue] = []

    def publish(self, event_type: str, payload: dict[str, Any]) -> ApiEvent:
        if event_type not in EVENT_TYPES:
            raise ValueError(f"unknown event type {event_type!r}")
        with self._lock:
            self._seq += 1
            event = ApiEvent(self._seq, event_type, dict(payload), self._clock())
            self._buffer.append(event)
            dead = []
            for q in self._subscribers:
                try:
                    q.put_nowait(event)
                except queue.Full:
                    # Never block the producer: drop one queued event to make
                    # room for the overflow notice, then evict the laggard.
                    try:
                        q.get_nowait()
                    except queue.Empty:
                        pass
                    try:
                        q.put_nowait(OVERFLOW)
                    except queue.Full:
                        pass
                    dead.append(q)
            for q in dead:
                self._subscribers.remove(q)
        return event

    def subscribe(self, since: Optional[int] = None) -> "Subscription":
        """Attach a subscriber; with ``since``, replay buffered events with
        seq > since first.  Raises EventGapError when the requested replay
        start has already been evicted from the buffer."""
        q: queue.Queue = queue.Queue(maxsize=SUBSCRIBER_QUEUE)
        with self._lock:
            replay: list[ApiEvent] = []
            if since is not None:
                if self._buffer and self._buffer[0].seq > since + 1:
                    raise EventGapError(
                        f"events after seq={since} no longer buffered "
                        f"(oldest buffered: {self._buffer[0].seq})")
                replay = [e for e in self._buffer if e.seq > since]
            self._subscribers.append(q)
        return Subscription(self, q, replay)

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    @property
    def last_seq(self) -> int:
        with self._lock:
            return self._seq


class EventGapError(RuntimeError):
    pass


class Subscription:
    """Iterator over events in seq order: buffered replay, then live."""

    def __init__(self, bus: EventBus, q: queue.Queue, replay: list[ApiEvent]):
        self._bus = bus
        self._queue = q
        self._replay = deque(replay)
        self._last_seq: Optional[int] = None
        self.overflowed = False
        self.closed = False

    def events(self, timeout: Optional[float] = None) -> Iterator[ApiEvent]:
        """Yield events until closed; stops on overflow or get() timeout."""
        while not self.closed:
            event = self.next(timeout=timeout)
            if event is None:
                return
            yield event

    def next(self, timeout: Optional[float] = None) -> Optional[ApiEvent]:
        while True:
            if self._replay:
                event = self._replay.popleft()
            else:
                try:
                    item = self._queue.get(timeout=timeout)
                except queue.Empty:
                    return None
                if item is OVERFLOW:
                    self.overflowed = True
                    self.close()
                    return None
                event = item
            # Live events already delivered during replay are duplicates.
            if self._last_seq is not None and event.seq <= self._last_seq:
                continue
            self._last_seq = event.seq
            return event

    def close(self) -> None:
        self.closed = True
        self._bus.unsubscribe(self._queue)
