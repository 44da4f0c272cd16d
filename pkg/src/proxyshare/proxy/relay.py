"""Bidirectional byte relay with exact per-direction accounting.

Both directions run concurrently.  Every chunk is reported to the meter right
after the write completes, so counters are never more than one in-flight chunk
behind the wire.  The relay ends when either side closes or the idle timeout
elapses with no bytes in either direction; counted bytes survive mid-stream
I/O errors.
"""

from __future__ import annotations

import logging
import socket
import threading
import time

from ..meter import DOWN, UP, Session, SessionFinalizedError, TrafficMeter

log = logging.getLogger(__name__)

BUF_SIZE = 65536
POLL = 1.0  # socket timeout used to re-check idle/stop conditions


def relay(client_sock: socket.socket, upstream_sock: socket.socket,
          session: Session, meter: TrafficMeter,
          idle_timeout: float = 60.0) -> tuple[int, int]:
    """Copy bytes client<->upstream until close/idle; returns (up, down) totals.
    The caller finalizes the session afterwards."""
    stop = threading.Event()
    last_activity = [time.monotonic()]
    lock = threading.Lock()

    def touch():
        with lock:
            last_activity[0] = time.monotonic()

    def idle_for() -> float:
        with lock:
            return time.monotonic() - last_activity[0]

    def pump(src: socket.socket, dst: socket.socket, direction: str):
        src.settimeout(POLL)
        try:
            while not stop.is_set():
                try:
                    chunk = src.recv(BUF_SIZE)
                except socket.timeout:
                    if idle_for() >= idle_timeout:
                        break
                    continue
                except OSError:
                    break
                if not chunk:
                    break
                try:
                    dst.sendall(chunk)
                except OSError:
                    break
                try:
                    meter.record_transfer(session, direction, len(chunk))
                except SessionFinalizedError:
                    break  # operator disconnect raced the relay; stop cleanly
                touch()
        finally:
            stop.set()
            # Unblock the peer pump: half-close both sockets.
            for sock in (src, dst):
                try:
                    sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass

    up_thread = threading.Thread(
        target=pump, args=(client_sock, upstream_sock, UP),
        name="relay-up", daemon=True)
    down_thread = threading.Thread(
        target=pump, args=(upstream_sock, client_sock, DOWN),
        name="relay-down", daemon=True)
    up_thread.start()
    down_thread.start()
    up_thread.join()
    down_thread.join()
    return session.totals()
