"""Host performance sampling: CPU, battery, connections, throughput.

One sample per interval (default 5 s).  CPU is the process' own CPU-time delta
over the wall-time delta, so 1.0 means one full core.  Battery is read from
the platform power-supply interface when present and simply absent otherwise.
Throughput comes from meter byte deltas over the interval.  Samples live in a
ring buffer covering the last 24 hours.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from .events import EventBus
from .meter import TrafficMeter

log = logging.getLogger(__name__)

RETENTION = 24 * 3600.0


@dataclass(frozen=True)
class PerfSample:
    timestamp: float
    cpu_fraction: Optional[float]
    battery_level: Optional[float]
    active_connections: int
    throughput_up: float    # bits/second over the last interval
    throughput_down: float

    def as_dict(self) -> dict:
        return {"timestamp": self.timestamp, "cpu_fraction": self.cpu_fraction,
                "battery_level": self.battery_level,
                "active_connections": self.active_connections,
                "throughput_up": self.throughput_up,
                "throughput_down": self.throughput_down}


def process_cpu_seconds() -> float:
    t = os.times()
    return t.user + t.system


def battery_percent() -> Optional[float]:
    try:
        import psutil
        info = psutil.sensors_battery()
        return float(info.percent) if info is not None else None
    except Exception:
        return None


class PerfSampler:
    def __init__(self, meter: TrafficMeter, interval: float = 5.0,
                 events: Optional[EventBus] = None,
                 clock: Callable[[], float] = time.time,
                 cpu_clock: Callable[[], float] = process_cpu_seconds,
                 battery: Callable[[], Optional[float]] = battery_percent):
        self.meter = meter
        self.interval = interval
        self.events = events
        self.clock = clock
        self.cpu_clock = cpu_clock
        self.battery = battery
        maxlen = max(int(RETENTION / interval), 1)
        self._samples: deque[PerfSample] = deque(maxlen=maxlen)
        self._lock = threading.Lock()
        self._last_wall = clock()
        self._last_cpu = self._safe_cpu()
        up, down = meter.global_totals()
        self._last_up = up
        self._last_down = down
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _safe_cpu(self) -> Optional[float]:
        try:
            return self.cpu_clock()
        except Exception:
            return None

    def sample(self) -> PerfSample:
        """Take one sample now; every metric degrades to absent, the sample
        itself is always emitted."""
        now = self.clock()
        elapsed = max(now - self._last_wall, 1e-9)

        cpu = self._safe_cpu()
        cpu_fraction = None
        if cpu is not None and self._last_cpu is not None:
            cpu_fraction = max(cpu - self._last_cpu, 0.0) / elapsed
        self._last_cpu = cpu

        up, down = self.meter.global_totals()
        throughput_up = (up - self._last_up) * 8.0 / elapsed
        throughput_down = (down - self._last_down) * 8.0 / elapsed
        self._last_up, self._last_down = up, down
        self._last_wall = now

        sample = PerfSample(
            timestamp=now,
            cpu_fraction=cpu_fraction,
            battery_level=self.battery(),
            active_connections=self.meter.live_session_count(),
            throughput_up=throughput_up,
            throughput_down=throughput_down)
        with self._lock:
            self._samples.append(sample)
        if self.events is not None:
            self.events.publish("perf_sample", sample.as_dict())
        return sample

    def samples(self, window: Optional[float] = None) -> list[PerfSample]:
        """Samples from the ring buffer; with ``window``, only the last N seconds."""
        with self._lock:
            items = list(self._samples)
        if window is not None:
            cutoff = self.clock() - window
            items = [s for s in items if s.timestamp >= cutoff]
        return items

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, name="perf-sampler",
                                        daemon=True)
        self._thread.start()

    def _loop(self) -> None:
        while not self._stop.wait(self.interval):
            try:
                self.sample()
            except Exception:
                log.exception("perf sample failed")

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
