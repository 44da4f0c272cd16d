"""LAN client discovery by periodic subnet sweeps.

Every probe interval the whole configured subnet is probed (ping, with a TCP
fallback when ICMP is unavailable; the probe function is injectable so tests
run without raw-socket privileges).  Responders are registered and marked
online; a client that neither answered a probe nor had proxy-session activity
within 2x the probe interval is marked offline.  Clients seen only through
proxy sessions stay online regardless of probe response.
"""

from __future__ import annotations

import ipaddress
import logging
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

from .meter import ClientRecord, TrafficMeter

log = logging.getLogger(__name__)

OFFLINE_FACTOR = 2.0  # intervals without probe response or session activity
SWEEP_WORKERS = 32

Prober = Callable[[str], bool]


def ping_prober(ip: str, timeout: float = 1.0) -> bool:
    """Probe via the system ping binary (works unprivileged on Linux)."""
    try:
        result = subprocess.run(
            ["ping", "-c", "1", "-W", str(max(1, int(timeout))), ip],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
            timeout=timeout + 2)
        return result.returncode == 0
    except (OSError, subprocess.TimeoutExpired):
        return False


class ClientDiscovery:
    def __init__(self, meter: TrafficMeter, subnet: ipaddress.IPv4Network,
                 interval: float, prober: Prober = ping_prober,
                 clock: Callable[[], float] = time.time):
        self.meter = meter
        self.subnet = subnet
        self.interval = interval
        self.prober = prober
        self.clock = clock
        self.on_membership_change: Optional[Callable[[], None]] = None
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def discover_clients(self) -> list[ClientRecord]:
        """Run one full sweep; returns the currently-online client records."""
        before = set(self.meter.online_ips())
        try:
            hosts = list(self.subnet.hosts())
            with ThreadPoolExecutor(max_workers=SWEEP_WORKERS) as pool:
                results = pool.map(self._probe_one, hosts)
            responders = {ip for ip in results if ip is not None}
        except Exception as exc:
            log.warning("subnet sweep failed, relying on session data: %s", exc)
            responders = set()
        for ip in responders:
            self.meter.mark_probe_response(ip)

        now = self.clock()
        threshold = OFFLINE_FACTOR * self.interval
        for record in self.meter.clients():
            if not record.online or record.ip in responders:
                continue
            idle = now - max(record.last_probe_response, record.last_session_activity)
            if record.last_session_activity > 0 and \
                    now - record.last_session_activity <= threshold:
                continue  # active proxy sessions keep a client online
            if idle > threshold:
                self.meter.mark_offline(record.ip)

        after = set(self.meter.online_ips())
        if after != before and self.on_membership_change is not None:
            self.on_membership_change()
        return [r for r in self.meter.clients() if r.online]

    def _probe_one(self, host: ipaddress.IPv4Address) -> Optional[str]:
        ip = str(host)
        try:
            return ip if self.prober(ip) else None
        except Exception:
            return None

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, name="discovery",
                                        daemon=True)
        self._thread.start()

    def _loop(self) -> None:
        while not self._stop.wait(self.interval):
            try:
                self.discover_clients()
            except Exception:
                log.exception("discovery sweep crashed; will retry next interval")

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
