"""Concurrent synthetic-client load generator.

Reproduces the stress methodology at desk scale: N clients start within a
barrier, saturate a download phase then an upload phase through the gateway,
measure their own byte counts, and report per-client throughput, aggregate
throughput, Jain's fairness index and application-level latency, averaged over
repetitions.  A rate-limited link shim can stand in for the shared radio
bottleneck so fairness is measurable on loopback.
"""

from __future__ import annotations

import logging
import socket
import statistics
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from ..model import HTTP_CONNECT, HTTP_FORWARD, SOCKS5
from .jfi import compute_jfi
from .linkshim import RateLimitedLink

log = logging.getLogger(__name__)

CONNECT_TIMEOUT = 10.0


class BenchError(RuntimeError):
    pass


@dataclass(frozen=True)
class LoadTestPlan:
    client_count: int
    duration_down: float
    duration_up: float
    protocol: str = HTTP_CONNECT
    link_rate_limit: Optional[float] = None  # bits/second, aggregate
    repetitions: int = 1
    chunk_bytes: int = 65536
    latency_probes: int = 10

    def __post_init__(self):
        if not 1 <= self.client_count <= 16:
            raise ValueError("client_count must be in 1..16")
        if self.duration_down <= 0 or self.duration_up <= 0:
            raise ValueError("phase durations must be > 0")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.protocol not in (HTTP_CONNECT, HTTP_FORWARD, SOCKS5):
            raise ValueError(f"unsupported protocol {self.protocol!r}")


@dataclass
class RepetitionResult:
    down_bps: list[float]
    up_bps: list[float]
    latencies_ms: list[float]
    bytes_down: list[int]
    bytes_up: list[int]

    @property
    def jfi_down(self) -> float:
        return compute_jfi(self.down_bps)

    @property
    def jfi_up(self) -> float:
        return compute_jfi(self.up_bps)


@dataclass
class LoadTestReport:
    plan: LoadTestPlan
    repetitions: list[RepetitionResult] = field(default_factory=list)

    def _agg(self, values: list[float]) -> tuple[float, float]:
        mean = statistics.fmean(values)
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        return mean, std

    @property
    def aggregate_down_bps(self) -> tuple[float, float]:
        return self._agg([sum(r.down_bps) for r in self.repetitions])

    @property
    def aggregate_up_bps(self) -> tuple[float, float]:
        return self._agg([sum(r.up_bps) for r in self.repetitions])

    @property
    def jfi_down(self) -> tuple[float, float]:
        return self._agg([r.jfi_down for r in self.repetitions])

    @property
    def jfi_up(self) -> tuple[float, float]:
        return self._agg([r.jfi_up for r in self.repetitions])

    @property
    def latency_ms(self) -> tuple[float, float]:
        samples = [ms for r in self.repetitions for ms in r.latencies_ms]
        if not samples:
            return 0.0, 0.0
        return self._agg(samples)

    def per_client_down_bps(self) -> list[float]:
        n = self.plan.client_count
        return [statistics.fmean([r.down_bps[i] for r in self.repetitions])
                for i in range(n)]

    def per_client_up_bps(self) -> list[float]:
        n = self.plan.client_count
        return [statistics.fmean([r.up_bps[i] for r in self.repetitions])
                for i in range(n)]

    def as_dict(self) -> dict:
        down, down_sd = self.aggregate_down_bps
        up, up_sd = self.aggregate_up_bps
        jd, jd_sd = self.jfi_down
        ju, ju_sd = self.jfi_up
        lat, lat_sd = self.latency_ms
        return {
            "clients": self.plan.client_count,
            "protocol": self.plan.protocol,
            "duration_down_s": self.plan.duration_down,
            "duration_up_s": self.plan.duration_up,
            "link_rate_limit_bps": self.plan.link_rate_limit,
            "repetitions": len(self.repetitions),
            "aggregate_down_bps": {"mean": down, "std": down_sd},
            "aggregate_up_bps": {"mean": up, "std": up_sd},
            "jfi_down": {"mean": jd, "std": jd_sd},
            "jfi_up": {"mean": ju, "std": ju_sd},
            "latency_ms": {"mean": lat, "std": lat_sd},
            "per_client_down_bps": self.per_client_down_bps(),
            "per_client_up_bps": self.per_client_up_bps(),
            "raw": [{"down_bps": r.down_bps, "up_bps": r.up_bps,
                     "latencies_ms": r.latencies_ms,
                     "bytes_down": r.bytes_down, "bytes_up": r.bytes_up}
                    for r in self.repetitions],
        }

    def as_table(self) -> str:
        down, down_sd = self.aggregate_down_bps
        up, up_sd = self.aggregate_up_bps
        jd, jd_sd = self.jfi_down
        ju, ju_sd = self.jfi_up
        lat, lat_sd = self.latency_ms
        n = self.plan.client_count
        mbps = 1e6
        header = (f"{'Clients':>7}  {'Down (Mbps)':>16}  {'JFI down':>14}  "
                  f"{'Up (Mbps)':>16}  {'JFI up':>14}  {'Latency (ms)':>16}")
        jfi_down = "N/A (1 client)" if n == 1 else f"{jd:.3f} +/- {jd_sd:.3f}"
        jfi_up = "N/A (1 client)" if n == 1 else f"{ju:.3f} +/- {ju_sd:.3f}"
        row = (f"{n:>7}  {down / mbps:>7.2f} +/- {down_sd / mbps:<5.2f}  "
               f"{jfi_down:>14}  "
               f"{up / mbps:>7.2f} +/- {up_sd / mbps:<5.2f}  "
               f"{jfi_up:>14}  "
               f"{lat:>7.2f} +/- {lat_sd:<5.2f}")
        return header + "\n" + row


# -- tunnel / request plumbing ---------------------------------------------


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    data = b""
    while len(data) < n:
        chunk = sock.recv(n - len(data))
        if not chunk:
            raise BenchError("connection closed mid-read")
        data += chunk
    return data


def open_tunnel(protocol: str, entry: tuple[str, int],
                origin: tuple[str, int]) -> socket.socket:
    """Open a byte tunnel to the origin through the gateway entry point."""
    sock = socket.create_connection(entry, timeout=CONNECT_TIMEOUT)
    try:
        if protocol == HTTP_CONNECT:
            req = (f"CONNECT {origin[0]}:{origin[1]} HTTP/1.1\r\n"
                   f"Host: {origin[0]}:{origin[1]}\r\n\r\n").encode()
            sock.sendall(req)
            head = b""
            while b"\r\n\r\n" not in head:
                chunk = sock.recv(4096)
                if not chunk:
                    raise BenchError("proxy closed during CONNECT")
                head += chunk
            if b" 200 " not in head.split(b"\r\n", 1)[0]:
                raise BenchError(f"CONNECT refused: {head.splitlines()[0]!r}")
        elif protocol == SOCKS5:
            sock.sendall(b"\x05\x01\x00")
            if _recv_exact(sock, 2) != b"\x05\x00":
                raise BenchError("SOCKS5 method negotiation failed")
            host = origin[0].encode()
            sock.sendall(b"\x05\x01\x00\x03" + bytes([len(host)]) + host +
                         struct.pack("!H", origin[1]))
            reply = _recv_exact(sock, 4)
            if reply[1] != 0x00:
                raise BenchError(f"SOCKS5 connect refused: code {reply[1]:#x}")
            atyp = reply[3]
            skip = {0x01: 4, 0x03: None, 0x04: 16}[atyp]
            if skip is None:
                skip = _recv_exact(sock, 1)[0]
            _recv_exact(sock, skip + 2)
        else:
            raise BenchError(f"open_tunnel does not support {protocol}")
        sock.settimeout(30.0)
        return sock
    except BaseException:
        sock.close()
        raise


def _http_forward_get(entry: tuple[str, int], origin: tuple[str, int],
                      path: str) -> bytes:
    """One absolute-form GET through the gateway; returns the body."""
    sock = socket.create_connection(entry, timeout=CONNECT_TIMEOUT)
    try:
        url = f"http://{origin[0]}:{origin[1]}{path}"
        sock.sendall((f"GET {url} HTTP/1.1\r\nHost: {origin[0]}:{origin[1]}\r\n"
                      f"\r\n").encode())
        sock.settimeout(30.0)
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = sock.recv(8192)
            if not chunk:
                raise BenchError("proxy closed mid-response")
            data += chunk
        head, _, body = data.partition(b"\r\n\r\n")
        length = None
        for line in head.decode("latin-1").split("\r\n")[1:]:
            if line.lower().startswith("content-length:"):
                length = int(line.split(":", 1)[1])
        if length is None:
            raise BenchError("origin response missing Content-Length")
        while len(body) < length:
            chunk = sock.recv(65536)
            if not chunk:
                break
            body += chunk
        return body
    finally:
        sock.close()


def _http_forward_post(entry: tuple[str, int], origin: tuple[str, int],
                       payload: bytes) -> None:
    sock = socket.create_connection(entry, timeout=CONNECT_TIMEOUT)
    try:
        url = f"http://{origin[0]}:{origin[1]}/up"
        sock.sendall((f"POST {url} HTTP/1.1\r\nHost: {origin[0]}:{origin[1]}\r\n"
                      f"Content-Length: {len(payload)}\r\n\r\n").encode() + payload)
        sock.settimeout(30.0)
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = sock.recv(8192)
            if not chunk:
                raise BenchError("proxy closed mid-response")
            data += chunk
    finally:
        sock.close()


# -- phases ----------------------------------------------------------------


def _download_phase(protocol, entry, origin, duration, chunk_bytes) -> int:
    """Pull chunks for the duration; returns payload bytes received."""
    received = 0
    deadline = time.monotonic() + duration
    if protocol == HTTP_FORWARD:
        while time.monotonic() < deadline:
            body = _http_forward_get(entry, origin, f"/down/{chunk_bytes}")
            received += len(body)
        return received
    sock = open_tunnel(protocol, entry, origin)
    try:
        payload = b""
        while time.monotonic() < deadline:
            sock.sendall(f"SEND {chunk_bytes}\n".encode())
            got = 0
            while got < chunk_bytes:
                data = sock.recv(min(65536, chunk_bytes - got))
                if not data:
                    raise BenchError("tunnel closed mid-download")
                got += len(data)
            received += got
    finally:
        sock.close()
    return received


def _upload_phase(protocol, entry, origin, duration, chunk_bytes) -> int:
    sent = 0
    deadline = time.monotonic() + duration
    payload = b"u" * chunk_bytes
    if protocol == HTTP_FORWARD:
        while time.monotonic() < deadline:
            _http_forward_post(entry, origin, payload)
            sent += len(payload)
        return sent
    sock = open_tunnel(protocol, entry, origin)
    try:
        while time.monotonic() < deadline:
            sock.sendall(f"RECV {chunk_bytes}\n".encode())
            sock.sendall(payload)
            ack = b""
            while not ack.endswith(b"OK\n"):
                data = sock.recv(16)
                if not data:
                    raise BenchError("tunnel closed mid-upload")
                ack += data
            sent += chunk_bytes
    finally:
        sock.close()
    return sent


def _latency_probes(protocol, entry, origin, count) -> list[float]:
    """Application-level round trips of a tiny request, in milliseconds."""
    samples = []
    if protocol == HTTP_FORWARD:
        for _ in range(count):
            start = time.monotonic()
            _http_forward_get(entry, origin, "/ping")
            samples.append((time.monotonic() - start) * 1000.0)
        return samples
    sock = open_tunnel(protocol, entry, origin)
    try:
        for _ in range(count):
            start = time.monotonic()
            sock.sendall(b"PING\n")
            reply = b""
            while not reply.endswith(b"PONG\n"):
                data = sock.recv(8)
                if not data:
                    raise BenchError("tunnel closed during latency probe")
                reply += data
            samples.append((time.monotonic() - start) * 1000.0)
    finally:
        sock.close()
    return samples


# -- orchestration ---------------------------------------------------------


def run_load_test(plan: LoadTestPlan, proxy_host: str, http_port: int,
                  socks_port: int, origin_host: str,
                  origin_port: int) -> LoadTestReport:
    """Run the full plan.  A client failing to connect aborts the repetition;
    partial repetitions are discarded, never averaged."""
    origin = (origin_host, origin_port)
    proxy_port = socks_port if plan.protocol == SOCKS5 else http_port

    shim: Optional[RateLimitedLink] = None
    if plan.link_rate_limit is not None:
        shim = RateLimitedLink(proxy_host, proxy_port,
                               plan.link_rate_limit).start()
        entry = (shim.host, shim.port)
    else:
        entry = (proxy_host, proxy_port)

    report = LoadTestReport(plan)
    try:
        for rep in range(plan.repetitions):
            result = _run_repetition(plan, entry, origin)
            report.repetitions.append(result)
            log.info("repetition %d/%d: down JFI %.3f, up JFI %.3f",
                     rep + 1, plan.repetitions, result.jfi_down, result.jfi_up)
    finally:
        if shim is not None:
            shim.stop()
    return report


def _run_repetition(plan: LoadTestPlan, entry, origin) -> RepetitionResult:
    n = plan.client_count
    down_barrier = threading.Barrier(n, timeout=30.0)
    up_barrier = threading.Barrier(n, timeout=60.0)
    bytes_down = [0] * n
    bytes_up = [0] * n
    latencies: list[list[float]] = [[] for _ in range(n)]
    errors: list[BaseException] = []
    lock = threading.Lock()

    def worker(i: int):
        try:
            down_barrier.wait()
            bytes_down[i] = _download_phase(
                plan.protocol, entry, origin, plan.duration_down, plan.chunk_bytes)
            up_barrier.wait()
            bytes_up[i] = _upload_phase(
                plan.protocol, entry, origin, plan.duration_up, plan.chunk_bytes)
            latencies[i] = _latency_probes(
                plan.protocol, entry, origin, plan.latency_probes)
        except BaseException as exc:
            with lock:
                errors.append(exc)
            down_barrier.abort()
            up_barrier.abort()

    threads = [threading.Thread(target=worker, args=(i,), daemon=True)
               for i in range(n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise BenchError(f"repetition aborted: {errors[0]}") from errors[0]

    return RepetitionResult(
        down_bps=[b * 8.0 / plan.duration_down for b in bytes_down],
        up_bps=[b * 8.0 / plan.duration_up for b in bytes_up],
        latencies_ms=[ms for client in latencies for ms in client],
        bytes_down=bytes_down,
        bytes_up=bytes_up)
