"""Per-client traffic accounting at the proxy layer.

The meter owns the client registry (auto-generated "Client-k" identifiers in
first-seen order) and per-session upload/download counters.  Counters are
updated concurrently by relay handlers; finalized sessions are flushed to the
durable store by a background thread with a retry queue so counted bytes are
never dropped.
"""

from __future__ import annotations

import ipaddress
import logging
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

from .events import EventBus
from .model import ALLOW, AdmissionDecision, TargetAddress
from .store import SessionStore

log = logging.getLogger(__name__)

UP = "up"
DOWN = "down"

DISCOVERY_PROBE = "probe"
DISCOVERY_SESSION = "proxy_session"


class UnknownClientError(KeyError):
    pass


class SubnetError(ValueError):
    pass


class SessionFinalizedError(RuntimeError):
    """record_transfer after finalize signals a relay/finalize ordering bug."""


@dataclass
class ClientRecord:
    ip: str
    identifier: str
    first_seen: float
    last_seen: float
    online: bool = True
    discovery_source: str = DISCOVERY_SESSION
    last_session_activity: float = 0.0
    last_probe_response: float = 0.0


class Session:
    """One proxied connection.  Counters are monotone while live and frozen
    once finalized."""

    __slots__ = ("session_id", "client_ip", "protocol", "target", "verdict",
                 "started_at", "ended_at", "bytes_up", "bytes_down",
                 "_lock", "_closers")

    def __init__(self, client_ip: str, protocol: str,
                 target: Optional[TargetAddress], verdict: AdmissionDecision,
                 started_at: float):
        self.session_id = uuid.uuid4().hex
        self.client_ip = client_ip
        self.protocol = protocol
        self.target = target
        self.verdict = verdict
        self.started_at = started_at
        self.ended_at: Optional[float] = None
        self.bytes_up = 0
        self.bytes_down = 0
        self._lock = threading.Lock()
        self._closers: list[Callable[[], None]] = []

    @property
    def live(self) -> bool:
        return self.ended_at is None

    def add_closer(self, closer: Callable[[], None]) -> None:
        """Register a callback that force-closes this session's sockets
        (used by operator disconnect)."""
        self._closers.append(closer)

    def force_close(self) -> None:
        for closer in self._closers:
            try:
                closer()
            except OSError:
                pass

    def totals(self) -> tuple[int, int]:
        with self._lock:
            return self.bytes_up, self.bytes_down

    def as_record(self) -> dict:
        up, down = self.totals()
        return {
            "session_id": self.session_id,
            "client_ip": self.client_ip,
            "protocol": self.protocol,
            "target_host": self.target.host if self.target else None,
            "target_port": self.target.port if self.target else None,
            "verdict": self.verdict.verdict,
            "detail": self.verdict.detail,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "bytes_up": up,
            "bytes_down": down,
        }


# Listener signature: (client_ip, byte_delta, now) -> None
UsageListener = Callable[[str, int, float], None]
# Finalize listener: (client_ip, total_bytes, duration_seconds) -> None
FinalizeListener = Callable[[str, int, float], None]


class TrafficMeter:
    def __init__(self, subnet: ipaddress.IPv4Network, store: Optional[SessionStore] = None,
                 events: Optional[EventBus] = None,
                 clock: Callable[[], float] = time.time,
                 allow_loopback: bool = True,
                 flush_retry_delay: float = 0.5):
        self.subnet = subnet
        self.store = store
        self.events = events
        self.clock = clock
        self.allow_loopback = allow_loopback
        self._lock = threading.Lock()
        self._clients: dict[str, ClientRecord] = {}
        self._next_client = 1
        self._live: dict[str, Session] = {}
        self._finalized: list[Session] = []
        self._total_up = 0
        self._total_down = 0
        self._usage_listeners: list[UsageListener] = []
        self._finalize_listeners: list[FinalizeListener] = []
        self._membership_listeners: list[Callable[[], None]] = []
        self._flush_queue: "queue.Queue[Optional[Session]]" = queue.Queue()
        self._flush_retry_delay = flush_retry_delay
        self._flusher: Optional[threading.Thread] = None
        self._stopping = threading.Event()
        self._pending = 0  # sessions enqueued but not yet durably written
        self._pending_cv = threading.Condition(self._lock)

    # -- listeners ---------------------------------------------------------

    def add_usage_listener(self, listener: UsageListener) -> None:
        self._usage_listeners.append(listener)

    def add_membership_listener(self, listener: Callable[[], None]) -> None:
        """Called whenever a client joins, rejoins, or goes offline (quota
        reallocation hook)."""
        self._membership_listeners.append(listener)

    def add_finalize_listener(self, listener: FinalizeListener) -> None:
        self._finalize_listeners.append(listener)

    # -- client registry ---------------------------------------------------

    def register_client(self, ip: str, source: str = DISCOVERY_SESSION) -> ClientRecord:
        """Idempotent registration; identifiers are assigned in first-seen order."""
        addr = ipaddress.ip_address(ip)
        in_subnet = addr.version == 4 and addr in self.subnet
        if not in_subnet and not (self.allow_loopback and addr.is_loopback):
            raise SubnetError(f"client {ip} is outside subnet {self.subnet}")
        now = self.clock()
        with self._lock:
            record = self._clients.get(ip)
            if record is not None:
                record.last_seen = now
                rejoined = not record.online
                record.online = True
            else:
                rejoined = False
        if record is not None:
            if rejoined:
                self._emit("client_joined", record)
            return record
        with self._lock:
            # Re-check under the lock; another thread may have registered it.
            record = self._clients.get(ip)
            if record is None:
                record = ClientRecord(
                    ip=ip, identifier=f"Client-{self._next_client}",
                    first_seen=now, last_seen=now, discovery_source=source)
                self._next_client += 1
                self._clients[ip] = record
            else:
                record.last_seen = now
                return record
        if self.store is not None:
            try:
                self.store.save_client(ip, record.identifier, record.first_seen)
            except Exception:
                log.exception("failed to persist client record for %s", ip)
        self._emit("client_joined", record)
        return record

    def _emit(self, event_type: str, record: ClientRecord) -> None:
        if self.events is not None:
            self.events.publish(event_type, {
                "client_ip": record.ip, "identifier": record.identifier})
        if event_type in ("client_joined", "client_left"):
            for listener in self._membership_listeners:
                listener()

    def mark_probe_response(self, ip: str) -> ClientRecord:
        record = self.register_client(ip, source=DISCOVERY_PROBE)
        with self._lock:
            record.last_probe_response = self.clock()
        return record

    def mark_offline(self, ip: str) -> None:
        with self._lock:
            record = self._clients.get(ip)
            if record is None or not record.online:
                return
            record.online = False
        self._emit("client_left", record)

    def clients(self) -> list[ClientRecord]:
        with self._lock:
            return sorted(self._clients.values(), key=lambda r: r.first_seen)

    def online_ips(self) -> list[str]:
        """IPs of online clients ordered by first_seen (quota allocation order)."""
        with self._lock:
            records = sorted(self._clients.values(), key=lambda r: r.first_seen)
            return [r.ip for r in records if r.online]

    def lookup(self, key: str) -> ClientRecord:
        """Find a client by ip or by identifier."""
        with self._lock:
            record = self._clients.get(key)
            if record is None:
                for candidate in self._clients.values():
                    if candidate.identifier == key:
                        record = candidate
                        break
        if record is None:
            raise UnknownClientError(key)
        return record

    # -- sessions ----------------------------------------------------------

    def open_session(self, client_ip: str, protocol: str,
                     target: Optional[TargetAddress],
                     verdict: AdmissionDecision) -> Session:
        record = self.register_client(client_ip)
        now = self.clock()
        session = Session(client_ip, protocol, target, verdict, now)
        with self._lock:
            record.last_session_activity = now
            self._live[session.session_id] = session
        if self.events is not None:
            self.events.publish("session_opened", {
                "session_id": session.session_id, "client_ip": client_ip,
                "identifier": record.identifier, "protocol": protocol,
                "target": str(target) if target else None,
                "verdict": verdict.verdict})
        if verdict.verdict != ALLOW:
            self.finalize_session(session)
        return session

    def record_transfer(self, session: Session, direction: str, byte_count: int) -> int:
        if byte_count < 0:
            raise ValueError("byte_count must be >= 0")
        with session._lock:
            if not session.live:
                raise SessionFinalizedError(
                    f"record_transfer on finalized session {session.session_id}")
            if direction == UP:
                session.bytes_up += byte_count
                total = session.bytes_up
            elif direction == DOWN:
                session.bytes_down += byte_count
                total = session.bytes_down
            else:
                raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
        now = self.clock()
        with self._lock:
            if direction == UP:
                self._total_up += byte_count
            else:
                self._total_down += byte_count
            record = self._clients.get(session.client_ip)
            if record is not None:
                record.last_session_activity = now
                record.last_seen = now
        if byte_count:
            for listener in self._usage_listeners:
                listener(session.client_ip, byte_count, now)
        return total

    def finalize_session(self, session: Session) -> Session:
        """Freeze counters, enqueue the durable write, emit session_closed.
        Idempotent."""
        with session._lock:
            if not session.live:
                return session
            session.ended_at = self.clock()
        with self._lock:
            self._live.pop(session.session_id, None)
            self._finalized.append(session)
            self._pending += 1
        self._flush_queue.put(session)
        if self.events is not None:
            up, down = session.totals()
            self.events.publish("session_closed", {
                "session_id": session.session_id, "client_ip": session.client_ip,
                "bytes_up": up, "bytes_down": down})
        duration = max(session.ended_at - session.started_at, 1e-9)
        total = sum(session.totals())
        for listener in self._finalize_listeners:
            listener(session.client_ip, total, duration)
        return session

    def live_sessions(self, client_ip: Optional[str] = None) -> list[Session]:
        with self._lock:
            sessions = list(self._live.values())
        if client_ip is not None:
            sessions = [s for s in sessions if s.client_ip == client_ip]
        return sessions

    def live_session_count(self) -> int:
        with self._lock:
            return len(self._live)

    def finalized_sessions(self, client_ip: Optional[str] = None) -> list[Session]:
        with self._lock:
            sessions = list(self._finalized)
        if client_ip is not None:
            sessions = [s for s in sessions if s.client_ip == client_ip]
        return sessions

    def global_totals(self) -> tuple[int, int]:
        with self._lock:
            return self._total_up, self._total_down

    def get_client_stats(self, key: str,
                         window: Optional[tuple[float, float]] = None) -> dict:
        record = self.lookup(key)
        now = self.clock()

        def overlaps(session: Session) -> bool:
            if window is None:
                return True
            start, end = window
            ended = session.ended_at if session.ended_at is not None else now
            return session.started_at <= end and ended >= start

        up = down = count = live = 0
        for session in self.finalized_sessions(record.ip):
            if overlaps(session):
                s_up, s_down = session.totals()
                up += s_up
                down += s_down
                count += 1
        for session in self.live_sessions(record.ip):
            if overlaps(session):
                s_up, s_down = session.totals()
                up += s_up
                down += s_down
                count += 1
                live += 1
        return {"ip": record.ip, "identifier": record.identifier,
                "bytes_up": up, "bytes_down": down,
                "session_count": count, "live_sessions": live}

    # -- persistence -------------------------------------------------------

    def start(self) -> None:
        if self.store is None or self._flusher is not None:
            return
        self._stopping.clear()
        self._flusher = threading.Thread(target=self._flush_loop,
                                         name="meter-flusher", daemon=True)
        self._flusher.start()

    def _flush_loop(self) -> None:
        while True:
            session = self._flush_queue.get()
            if session is None:
                return
            while True:
                try:
                    self.store.save_session(session.as_record())
                    break
                except Exception as exc:
                    if self._stopping.is_set():
                        log.error("dropping store write at shutdown: %s", exc)
                        break
                    log.warning("store write failed (%s); retrying", exc)
                    time.sleep(self._flush_retry_delay)
            with self._pending_cv:
                self._pending -= 1
                self._pending_cv.notify_all()

    def flush(self, timeout: float = 10.0) -> bool:
        """Block until every finalized session has been durably written."""
        if self.store is None:
            return True
        deadline = time.monotonic() + timeout
        with self._pending_cv:
            while self._pending > 0:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._pending_cv.wait(remaining)
        return True

    def stop(self, flush_timeout: float = 10.0) -> None:
        """Finalize all live sessions, flush, and stop the flusher thread."""
        for session in self.live_sessions():
            session.force_close()
            self.finalize_session(session)
        self.flush(flush_timeout)
        self._stopping.set()
        if self._flusher is not None:
            self._flush_queue.put(None)
            self._flusher.join(timeout=flush_timeout)
            self._flusher = None
