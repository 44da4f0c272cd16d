"""Traffic governance on top of raw accounting: quota allocation with block +
cooldown, domain/port filter admission, consumption-anomaly detection, and
operator disconnect."""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .config import FilterRuleSet, QuotaPolicy
from .events import EventBus
from .filters import domain_blocked, port_blocked
from .meter import TrafficMeter
from .model import (ALLOW, ALLOWED, DENY_FILTER_DOMAIN, DENY_FILTER_PORT,
                    DENY_QUOTA, AdmissionDecision, TargetAddress)

log = logging.getLogger(__name__)

# Anomaly-detection defaults; all overridable at construction.
ANOMALY_WINDOW = 60.0          # sliding window for the "sustained" rate
ANOMALY_DEBOUNCE = 300.0       # at most one alert per client per 5 minutes
ANOMALY_MIN_SESSIONS = 3       # cold-start guard
BASELINE_WEIGHT = 0.3          # EW-mean weight for each new finalized session


@dataclass
class ClientAllocation:
    allocated_bytes: int = 0
    used_bytes: int = 0
    blocked_until: Optional[float] = None
    blocked: bool = False  # edge-trigger latch for the current block episode


@dataclass
class ClientBaseline:
    baseline_rate: float = 0.0  # bytes/second, EW mean over finalized sessions
    sample_count: int = 0
    samples: deque = field(default_factory=deque)  # (timestamp, bytes) in window
    last_alert: float = float("-inf")


def compute_allocations(policy: QuotaPolicy, active_ips: list[str]) -> dict[str, int]:
    """Per-client byte allocations.

    dynamic: equal integer split of the shared total, remainder given one byte
    each to the earliest-seen clients (input order is first-seen order).
    fixed: every client gets the constant per-client quota.
    off: no allocations.
    """
    if policy.mode == "off" or not active_ips:
        return {}
    if policy.mode == "fixed":
        return {ip: policy.per_client_quota_bytes for ip in active_ips}
    share, remainder = divmod(policy.total_quota_bytes, len(active_ips))
    return {ip: share + (1 if i < remainder else 0)
            for i, ip in enumerate(active_ips)}


class TrafficManager:
    """Single owner of quota/filter/anomaly state.  Admission checks are
    read-only; all transitions serialize through one lock so the dynamic-mode
    conservation invariant holds atomically."""

    def __init__(self, policy: QuotaPolicy, filters: FilterRuleSet,
                 meter: TrafficMeter, events: Optional[EventBus] = None,
                 clock: Callable[[], float] = time.time,
                 anomaly_multiplier: float = 3.0,
                 anomaly_window: float = ANOMALY_WINDOW,
                 anomaly_debounce: float = ANOMALY_DEBOUNCE,
                 anomaly_min_sessions: int = ANOMALY_MIN_SESSIONS,
                 baseline_weight: float = BASELINE_WEIGHT):
        self.meter = meter
        self.events = events
        self.clock = clock
        self.anomaly_multiplier = anomaly_multiplier
        self.anomaly_window = anomaly_window
        self.anomaly_debounce = anomaly_debounce
        self.anomaly_min_sessions = anomaly_min_sessions
        self.baseline_weight = baseline_weight
        self._lock = threading.RLock()
        self._policy = policy
        self._filters = filters
        self._alloc: dict[str, ClientAllocation] = {}
        self._baselines: dict[str, ClientBaseline] = {}
        meter.add_usage_listener(self._on_transfer)
        meter.add_finalize_listener(self._on_session_finalized)
        meter.add_membership_listener(self.refresh_membership)

    # -- policy / rules ----------------------------------------------------

    @property
    def policy(self) -> QuotaPolicy:
        with self._lock:
            return self._policy

    @property
    def filters(self) -> FilterRuleSet:
        with self._lock:
            return self._filters

    def set_policy(self, policy: QuotaPolicy) -> None:
        """Swap the quota policy and recompute allocations immediately; emits
        block events for clients whose usage now exceeds their allocation."""
        with self._lock:
            self._policy = policy
            self._recompute_locked()
            now = self.clock()
            for ip in list(self._alloc):
                self._check_block_locked(ip, now)

    def set_filters(self, rules: FilterRuleSet) -> None:
        with self._lock:
            self._filters = rules

    # -- membership / allocation ------------------------------------------

    def refresh_membership(self) -> None:
        """Recompute allocations from the meter's current online clients.
        Called on every join/leave event; used_bytes carries over."""
        with self._lock:
            self._recompute_locked()

    def _recompute_locked(self) -> None:
        active = self.meter.online_ips()
        allocations = compute_allocations(self._policy, active)
        for ip, allocated in allocations.items():
            state = self._alloc.setdefault(ip, ClientAllocation())
            state.allocated_bytes = allocated
        # Clients no longer active keep their used/blocked state but hold no
        # share of a dynamic total.
        if self._policy.mode == "dynamic":
            for ip, state in self._alloc.items():
                if ip not in allocations:
                    state.allocated_bytes = 0

    def allocation(self, ip: str) -> ClientAllocation:
        with self._lock:
            return self._alloc.setdefault(ip, ClientAllocation())

    def allocations(self) -> dict[str, ClientAllocation]:
        with self._lock:
            return {ip: ClientAllocation(a.allocated_bytes, a.used_bytes,
                                         a.blocked_until, a.blocked)
                    for ip, a in self._alloc.items()}

    # -- admission ---------------------------------------------------------

    def check_admission(self, client_ip: str, target: Optional[TargetAddress],
                        now: Optional[float] = None) -> AdmissionDecision:
        """Fixed evaluation order: quota block, then domain filter, then port
        filter, then allow.  Strictly read-only: an elapsed block simply stops
        matching here; the latch/used-bytes reset happens on the usage path."""
        if now is None:
            now = self.clock()
        with self._lock:
            state = self._alloc.get(client_ip)
            if state is not None and state.blocked_until is not None \
                    and state.blocked_until > now:
                remaining = state.blocked_until - now
                return AdmissionDecision(
                    DENY_QUOTA,
                    f"quota exhausted; cooldown ends in {remaining:.0f}s")
            rules = self._filters
        if target is not None:
            if domain_blocked(target.host, rules):
                return AdmissionDecision(DENY_FILTER_DOMAIN,
                                         f"domain {target.host} is blocked")
            if port_blocked(target.port, rules):
                return AdmissionDecision(DENY_FILTER_PORT,
                                         f"port {target.port} is blocked")
        return ALLOWED

    def _expire_block_locked(self, ip: str, now: float) -> None:
        state = self._alloc.get(ip)
        if state is None or state.blocked_until is None:
            return
        if state.blocked_until <= now:
            state.blocked_until = None
            state.blocked = False
            state.used_bytes = 0  # quota window restarts after cooldown
            self._publish("unblock", ip, "cooldown elapsed; quota window reset")

    # -- usage / blocking --------------------------------------------------

    def _on_transfer(self, client_ip: str, byte_count: int, now: float) -> None:
        with self._lock:
            self._expire_block_locked(client_ip, now)
            state = self._alloc.setdefault(client_ip, ClientAllocation())
            state.used_bytes += byte_count
            self._check_block_locked(client_ip, now)
            baseline = self._baselines.setdefault(client_ip, ClientBaseline())
            baseline.samples.append((now, byte_count))
            self._check_anomaly_locked(client_ip, baseline, now)

    def _check_block_locked(self, ip: str, now: float) -> None:
        if self._policy.mode == "off":
            return
        state = self._alloc.get(ip)
        if state is None or state.allocated_bytes <= 0:
            return
        if state.used_bytes >= state.allocated_bytes and not state.blocked:
            state.blocked = True
            state.blocked_until = now + self._policy.cooldown
            self._publish(
                "block", ip,
                f"quota reached ({state.used_bytes}/{state.allocated_bytes} bytes); "
                f"cooldown {self._policy.cooldown:.0f}s")

    def _publish(self, event_type: str, ip: str, detail: str) -> None:
        if self.events is None:
            return
        try:
            identifier = self.meter.lookup(ip).identifier
        except KeyError:
            identifier = ip
        self.events.publish(event_type, {
            "client_ip": ip, "identifier": identifier, "detail": detail})

    # -- anomaly detection -------------------------------------------------

    def _on_session_finalized(self, client_ip: str, total_bytes: int,
                              duration: float) -> None:
        if total_bytes == 0:
            return  # denied/empty sessions carry no consumption signal
        rate = total_bytes / duration
        with self._lock:
            baseline = self._baselines.setdefault(client_ip, ClientBaseline())
            if baseline.sample_count == 0:
                baseline.baseline_rate = rate
            else:
                w = self.baseline_weight
                baseline.baseline_rate = w * rate + (1 - w) * baseline.baseline_rate
            baseline.sample_count += 1

    def current_rate(self, client_ip: str, now: Optional[float] = None) -> float:
        """Bytes/second over the sliding anomaly window."""
        if now is None:
            now = self.clock()
        with self._lock:
            baseline = self._baselines.get(client_ip)
            if baseline is None:
                return 0.0
            self._trim_window_locked(baseline, now)
            return sum(n for _, n in baseline.samples) / self.anomaly_window

    def _trim_window_locked(self, baseline: ClientBaseline, now: float) -> None:
        cutoff = now - self.anomaly_window
        while baseline.samples and baseline.samples[0][0] < cutoff:
            baseline.samples.popleft()

    def _check_anomaly_locked(self, ip: str, baseline: ClientBaseline,
                              now: float) -> None:
        if baseline.sample_count < self.anomaly_min_sessions:
            return
        if now - baseline.last_alert < self.anomaly_debounce:
            return
        self._trim_window_locked(baseline, now)
        rate = sum(n for _, n in baseline.samples) / self.anomaly_window
        if rate > self.anomaly_multiplier * baseline.baseline_rate:
            baseline.last_alert = now
            self._publish(
                "anomaly", ip,
                f"sustained rate {rate:.0f} B/s exceeds "
                f"{self.anomaly_multiplier:g}x baseline {baseline.baseline_rate:.0f} B/s")

    def check_anomaly(self, client_ip: str, current_rate: float,
                      now: Optional[float] = None) -> Optional[dict]:
        """Explicit anomaly check against the stored baseline; returns the
        alert payload or None.  Shares the de-bounce with the implicit path."""
        if now is None:
            now = self.clock()
        with self._lock:
            baseline = self._baselines.setdefault(client_ip, ClientBaseline())
            if baseline.sample_count < self.anomaly_min_sessions:
                return None
            if now - baseline.last_alert < self.anomaly_debounce:
                return None
            if current_rate > self.anomaly_multiplier * baseline.baseline_rate:
                baseline.last_alert = now
                alert = {"client_ip": client_ip, "rate": current_rate,
                         "baseline": baseline.baseline_rate,
                         "multiplier": self.anomaly_multiplier}
                self._publish("anomaly", client_ip,
                              f"sustained rate {current_rate:.0f} B/s exceeds "
                              f"{self.anomaly_multiplier:g}x baseline "
                              f"{baseline.baseline_rate:.0f} B/s")
                return alert
        return None

    def baseline(self, client_ip: str) -> ClientBaseline:
        with self._lock:
            return self._baselines.setdefault(client_ip, ClientBaseline())

    # -- operator actions --------------------------------------------------

    def disconnect_client(self, client_ip: str, reason: str = "operator") -> int:
        """Force-close and finalize every live session of the client, then
        apply a cooldown block.  Returns the number of terminated sessions."""
        self.meter.lookup(client_ip)  # raises UnknownClientError
        sessions = self.meter.live_sessions(client_ip)
        for session in sessions:
            session.force_close()
            self.meter.finalize_session(session)
        now = self.clock()
        with self._lock:
            state = self._alloc.setdefault(client_ip, ClientAllocation())
            state.blocked = True
            state.blocked_until = now + self._policy.cooldown
        self._publish("block", client_ip,
                      f"disconnected by operator ({reason}); "
                      f"cooldown {self._policy.cooldown:.0f}s")
        return len(sessions)
