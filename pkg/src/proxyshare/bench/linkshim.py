"""Rate-limited forwarding shim: a desk-scale stand-in for the shared radio
bottleneck.

All connections through the shim draw from one token-bucket budget, so
competing transfers contend for a fixed aggregate rate the way clients contend
for a wireless link.  Small chunk sizes keep the contention fine-grained,
which is what makes fairness measurable on loopback.
"""

from __future__ import annotations

import socket
import threading
import time
from typing import Optional

CHUNK = 8192


class TokenBucket:
    """Blocking token bucket shared by all shim connections."""

    def __init__(self, rate_bytes_per_sec: float, burst_bytes: Optional[float] = None):
        if rate_bytes_per_sec <= 0:
            raise ValueError("rate must be > 0")
        self.rate = rate_bytes_per_sec
        self.burst = burst_bytes if burst_bytes is not None else max(rate_bytes_per_sec * 0.05, CHUNK)
        self._tokens = self.burst
        self._last = time.monotonic()
        self._cv = threading.Condition()
        self.consumed = 0

    def _refill_locked(self) -> None:
        now = time.monotonic()
        self._tokens = min(self.burst, self._tokens + (now - self._last) * self.rate)
        self._last = now

    def acquire(self, n: int, timeout: Optional[float] = None) -> bool:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cv:
            while True:
                self._refill_locked()
                if self._tokens >= n:
                    self._tokens -= n
                    self.consumed += n
                    self._cv.notify_all()
                    return True
                wait = (n - self._tokens) / self.rate
                if deadline is not None:
                    wait = min(wait, deadline - time.monotonic())
                    if wait <= 0:
                        return False
                self._cv.wait(wait)


class RateLimitedLink:
    """TCP forwarder to a fixed target with a shared aggregate rate cap."""

    def __init__(self, target_host: str, target_port: int,
                 rate_bits_per_sec: float, listen_host: str = "127.0.0.1"):
        self.target = (target_host, target_port)
        self.bucket = TokenBucket(rate_bits_per_sec / 8.0)
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind((listen_host, 0))
        self._server.listen(64)
        self.host, self.port = self._server.getsockname()
        self._stopping = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> "RateLimitedLink":
        self._thread = threading.Thread(target=self._accept_loop,
                                        name="link-shim", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stopping.set()
        try:
            self._server.close()
        except OSError:
            pass
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            threading.Thread(target=self._forward, args=(conn,),
                             daemon=True).start()

    def _forward(self, client: socket.socket) -> None:
        try:
            upstream = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            upstream.connect(self.target)
        except OSError:
            client.close()
            return
        stop = threading.Event()

        def pump(src: socket.socket, dst: socket.socket):
            try:
                while not stop.is_set():
                    data = src.recv(CHUNK)
                    if not data:
                        break
                    self.bucket.acquire(len(data))
                    dst.sendall(data)
            except OSError:
                pass
            finally:
                stop.set()
                for sock in (src, dst):
                    try:
                        sock.shutdown(socket.SHUT_RDWR)
                    except OSError:
                        pass

        t1 = threading.Thread(target=pump, args=(client, upstream), daemon=True)
        t2 = threading.Thread(target=pump, args=(upstream, client), daemon=True)
        t1.start()
        t2.start()
        t1.join()
        t2.join()
        client.close()
        upstream.close()
