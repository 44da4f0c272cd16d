"""Loopback test origin: byte source/sink plus latency echo.

Speaks a one-line command protocol over raw TCP (what tunneled bench clients
use) and just enough HTTP for forward-mode benchmarking:

  raw:   ``SEND <n>``  -> n bytes of payload
         ``RECV <n>``  -> reads n bytes, replies ``OK``
         ``PING``      -> ``PONG``
  http:  ``GET /down/<n>``  -> 200 with an n-byte body
         ``POST /up``       -> reads the Content-Length body, replies 200 ``OK``
         ``GET /ping``      -> 200 ``PONG``
"""

from __future__ import annotations

import socket
import threading
from typing import Optional

PAYLOAD = b"x" * 65536


class OriginServer:
    def __init__(self, host: str = "127.0.0.1"):
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind((host, 0))
        self._server.listen(128)
        self.host, self.port = self._server.getsockname()
        self._stopping = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> "OriginServer":
        self._thread = threading.Thread(target=self._accept_loop,
                                        name="bench-origin", daemon=True)
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
            threading.Thread(target=self._handle, args=(conn,),
                             daemon=True).start()

    def _handle(self, conn: socket.socket) -> None:
        try:
            buf = b""
            while True:
                while b"\n" not in buf:
                    chunk = conn.recv(4096)
                    if not chunk:
                        return
                    buf += chunk
                line, _, buf = buf.partition(b"\n")
                if line.startswith((b"GET ", b"POST ")):
                    self._handle_http(conn, line, buf)
                    return  # HTTP responses are close-delimited
                parts = line.strip().split()
                if not parts:
                    continue
                cmd = parts[0].upper()
                if cmd == b"PING":
                    conn.sendall(b"PONG\n")
                elif cmd == b"SEND" and len(parts) == 2:
                    self._send_payload(conn, int(parts[1]))
                elif cmd == b"RECV" and len(parts) == 2:
                    n = int(parts[1])
                    got = min(len(buf), n)
                    buf = buf[got:]
                    while got < n:
                        chunk = conn.recv(min(65536, n - got))
                        if not chunk:
                            return
                        got += len(chunk)
                    conn.sendall(b"OK\n")
                else:
                    conn.sendall(b"ERR\n")
                    return
        except (OSError, ValueError):
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def _send_payload(self, conn: socket.socket, n: int) -> None:
        sent = 0
        while sent < n:
            chunk = PAYLOAD[:min(len(PAYLOAD), n - sent)]
            conn.sendall(chunk)
            sent += len(chunk)

    def _handle_http(self, conn: socket.socket, first_line: bytes,
                     buf: bytes) -> None:
        data = first_line + b"\n" + buf
        while b"\r\n\r\n" not in data:
            chunk = conn.recv(8192)
            if not chunk:
                return
            data += chunk
        head, _, rest = data.partition(b"\r\n\r\n")
        lines = head.decode("latin-1").split("\r\n")
        method, path, _ = lines[0].split()
        headers = {}
        for line in lines[1:]:
            if ":" in line:
                name, _, value = line.partition(":")
                headers[name.strip().lower()] = value.strip()

        if method == "GET" and path.startswith("/down/"):
            n = int(path.rsplit("/", 1)[1])
            conn.sendall((f"HTTP/1.1 200 OK\r\nContent-Length: {n}\r\n"
                          f"Connection: close\r\n\r\n").encode())
            self._send_payload(conn, n)
        elif method == "GET" and path == "/ping":
            conn.sendall(b"HTTP/1.1 200 OK\r\nContent-Length: 4\r\n"
                         b"Connection: close\r\n\r\nPONG")
        elif method == "POST" and path == "/up":
            length = int(headers.get("content-length", "0"))
            got = len(rest)
            while got < length:
                chunk = conn.recv(min(65536, length - got))
                if not chunk:
                    return
                got += len(chunk)
            conn.sendall(b"HTTP/1.1 200 OK\r\nContent-Length: 2\r\n"
                         b"Connection: close\r\n\r\nOK")
        else:
            conn.sendall(b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\n"
                         b"Connection: close\r\n\r\n")
