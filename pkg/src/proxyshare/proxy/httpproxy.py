"""HTTP proxy listener: absolute-form forwarding and CONNECT tunneling.

Request flow per connection: authenticate (when configured), parse the
target, ask the traffic manager for an admission decision, then either relay
through the egress-bound upstream or answer the mapped status code.  Byte
accounting: CONNECT counts tunneled payload only (the CONNECT head and the
``200 Connection Established`` reply are excluded); forwarded HTTP counts the
full message bytes as written on the wire.
"""

from __future__ import annotations

import logging
import socket
import threading
from typing import Optional
from urllib.parse import urlsplit

from ..config import AuthCredentials
from ..meter import DOWN, UP, Session, TrafficMeter
from ..model import (ALLOW, DENY_AUTH, HTTP_CONNECT, HTTP_FORWARD,
                     AdmissionDecision, TargetAddress)
from .common import (VERDICT_STATUS, authenticate, http_error,
                     parse_basic_auth, proxy_auth_required, recv_head)
from .relay import relay
from .upstream import Dialer, UpstreamError

log = logging.getLogger(__name__)

HEAD_TIMEOUT = 30.0

HOP_BY_HOP = {"connection", "proxy-connection", "keep-alive",
              "proxy-authenticate", "proxy-authorization",
              "te", "trailer", "transfer-encoding", "upgrade"}


class HttpProxyListener:
    def __init__(self, host: str, port: int, meter: TrafficMeter, manager,
                 dialer: Dialer, auth: Optional[AuthCredentials] = None,
                 idle_timeout: float = 60.0):
        self.host = host
        self.port = port
        self.meter = meter
        self.manager = manager
        self.dialer = dialer
        self.auth = auth
        self.idle_timeout = idle_timeout
        self._server: Optional[socket.socket] = None
        self._thread: Optional[threading.Thread] = None
        self._stopping = threading.Event()

    def start(self) -> None:
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((self.host, self.port))
        server.listen(128)
        # A blocking accept() is not reliably woken by close() from another
        # thread, so poll with a timeout to notice the stop flag.
        server.settimeout(0.5)
        self._server = server
        self._thread = threading.Thread(target=self._accept_loop,
                                        name="http-proxy", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stopping.set()
        if self._server is not None:
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
                conn, addr = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.settimeout(None)
            threading.Thread(target=self._handle_safely, args=(conn, addr),
                             daemon=True).start()

    def _handle_safely(self, conn: socket.socket, addr) -> None:
        try:
            self.handle(conn, addr[0])
        except Exception:
            log.exception("http handler crashed for %s", addr)
        finally:
            try:
                conn.close()
            except OSError:
                pass

    # -- request handling --------------------------------------------------

    def handle(self, conn: socket.socket, client_ip: str) -> None:
        conn.settimeout(HEAD_TIMEOUT)
        try:
            first = conn.recv(8192)
        except OSError:
            return
        if not first:
            return
        # Protocol isolation: binary junk (e.g. a SOCKS greeting) gets a 400
        # instead of hanging the head parser.
        if not first[:1].isalpha():
            self._reply(conn, http_error(400, "Bad Request"))
            return
        try:
            head, leftover = recv_head(conn, first)
        except (ValueError, OSError):
            self._reply(conn, http_error(400, "Bad Request"))
            return

        request = _parse_head(head)
        if request is None:
            self._reply(conn, http_error(400, "Bad Request"))
            return

        if request.method == "CONNECT":
            self._handle_connect(conn, client_ip, request, leftover)
        else:
            self._handle_forward(conn, client_ip, request, leftover)

    def _check_auth(self, conn: socket.socket, client_ip: str,
                    request: "_Request", protocol: str,
                    target: Optional[TargetAddress]) -> bool:
        creds = None
        header = request.headers.get("proxy-authorization")
        if header:
            creds = parse_basic_auth(header)
        if authenticate(creds, self.auth):
            return True
        decision = AdmissionDecision(DENY_AUTH, "missing or invalid proxy credentials")
        self.meter.open_session(client_ip, protocol, target, decision)
        self._reply(conn, proxy_auth_required())
        return False

    def _handle_connect(self, conn: socket.socket, client_ip: str,
                        request: "_Request", leftover: bytes) -> None:
        target = _parse_authority(request.uri, default_port=443)
        if target is None:
            self._reply(conn, http_error(400, "Bad Request"))
            return
        if not self._check_auth(conn, client_ip, request, HTTP_CONNECT, target):
            return
        decision = self.manager.check_admission(client_ip, target)
        session = self.meter.open_session(client_ip, HTTP_CONNECT, target, decision)
        if not decision.allowed:
            status, reason = VERDICT_STATUS[decision.verdict]
            self._reply(conn, http_error(status, reason, body=decision.detail))
            return
        try:
            upstream = self.dialer(target)
        except (UpstreamError, OSError) as exc:
            self._reply(conn, http_error(502, "Bad Gateway", body=str(exc)))
            self.meter.finalize_session(session)
            return
        try:
            conn.sendall(b"HTTP/1.1 200 Connection Established\r\n\r\n")
            session.add_closer(lambda: _shutdown(conn))
            session.add_closer(lambda: _shutdown(upstream))
            if leftover:
                upstream.sendall(leftover)
                self.meter.record_transfer(session, UP, len(leftover))
            relay(conn, upstream, session, self.meter, self.idle_timeout)
        finally:
            _close(upstream)
            self.meter.finalize_session(session)

    def _handle_forward(self, conn: socket.socket, client_ip: str,
                        request: "_Request", leftover: bytes) -> None:
        # One session per client connection; counters accumulate across
        # sequential requests.
        session: Optional[Session] = None
        try:
            while True:
                session, keep_going = self._forward_one(
                    conn, client_ip, request, leftover, session)
                if not keep_going:
                    return
                # Next request on the same client connection, if any.
                try:
                    conn.settimeout(self.idle_timeout)
                    first = conn.recv(8192)
                except OSError:
                    return
                if not first or not first[:1].isalpha():
                    return
                try:
                    head, leftover = recv_head(conn, first)
                except (ValueError, OSError):
                    return
                request = _parse_head(head)
                if request is None or request.method == "CONNECT":
                    self._reply(conn, http_error(400, "Bad Request"))
                    return
        finally:
            if session is not None:
                self.meter.finalize_session(session)

    def _forward_one(self, conn: socket.socket, client_ip: str,
                     request: "_Request", leftover: bytes,
                     session: Optional[Session]
                     ) -> tuple[Optional[Session], bool]:
        """Forward one absolute-form request.  Returns (session, keep_going)."""
        if not request.uri.lower().startswith("http://"):
            self._reply(conn, http_error(400, "Bad Request",
                                         body="absolute-form http:// URI required"))
            return session, False
        url = urlsplit(request.uri)
        target = _parse_authority(url.netloc, default_port=80)
        if target is None:
            self._reply(conn, http_error(400, "Bad Request"))
            return session, False
        if not self._check_auth(conn, client_ip, request, HTTP_FORWARD, target):
            return session, False
        if "transfer-encoding" in request.headers:
            self._reply(conn, http_error(400, "Bad Request",
                                         body="chunked request bodies unsupported"))
            return session, False

        # Read the request body (Content-Length framing only).
        body = leftover
        length_str = request.headers.get("content-length", "0")
        if not length_str.isdigit():
            self._reply(conn, http_error(400, "Bad Request"))
            return session, False
        length = int(length_str)
        try:
            while len(body) < length:
                chunk = conn.recv(min(65536, length - len(body)))
                if not chunk:
                    return session, False
                body += chunk
        except OSError:
            return session, False
        body = body[:length]

        decision = self.manager.check_admission(client_ip, target)
        if not decision.allowed:
            self.meter.open_session(client_ip, HTTP_FORWARD, target, decision)
            status, reason = VERDICT_STATUS[decision.verdict]
            self._reply(conn, http_error(status, reason, body=decision.detail))
            return session, False
        if session is None:
            session = self.meter.open_session(client_ip, HTTP_FORWARD, target,
                                              decision)
            session.add_closer(lambda: _shutdown(conn))

        try:
            upstream = self.dialer(target)
        except (UpstreamError, OSError) as exc:
            self._reply(conn, http_error(502, "Bad Gateway", body=str(exc)))
            return session, False

        try:
            wire_head = _rebuild_head(request, url)
            upstream.sendall(wire_head)
            self.meter.record_transfer(session, UP, len(wire_head))
            if body:
                upstream.sendall(body)
                self.meter.record_transfer(session, UP, len(body))
            # Stream the response until the origin closes (we force
            # Connection: close on the forwarded request).
            upstream.settimeout(self.idle_timeout)
            while True:
                try:
                    chunk = upstream.recv(65536)
                except OSError:
                    break
                if not chunk:
                    break
                try:
                    conn.sendall(chunk)
                except OSError:
                    return session, False
                self.meter.record_transfer(session, DOWN, len(chunk))
        finally:
            _close(upstream)
        return session, True

    def _reply(self, conn: socket.socket, payload: bytes) -> None:
        try:
            conn.sendall(payload)
        except OSError:
            pass


def _rebuild_head(request: "_Request", url) -> bytes:
    """Origin-form request head: hop-by-hop headers stripped, Connection:
    close appended so response framing is close-delimited."""
    drop = set(HOP_BY_HOP)
    for token in request.headers.get("connection", "").split(","):
        token = token.strip().lower()
        if token:
            drop.add(token)
    path = url.path or "/"
    if url.query:
        path += "?" + url.query
    lines = [f"{request.method} {path} {request.version}"]
    for name, value in request.header_order:
        if name.lower() in drop:
            continue
        lines.append(f"{name}: {value}")
    lines.append("Connection: close")
    return ("\r\n".join(lines) + "\r\n\r\n").encode("latin-1")


def _shutdown(sock: socket.socket) -> None:
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass


def _close(sock: socket.socket) -> None:
    try:
        sock.close()
    except OSError:
        pass


class _Request:
    __slots__ = ("method", "uri", "version", "headers", "header_order", "raw_head")

    def __init__(self, method, uri, version, headers, header_order, raw_head):
        self.method = method
        self.uri = uri
        self.version = version
        self.headers = headers            # lowercase name -> value
        self.header_order = header_order  # [(original name, value)] in order
        self.raw_head = raw_head


def _parse_head(head: bytes) -> Optional[_Request]:
    try:
        text = head.decode("latin-1")
    except UnicodeDecodeError:
        return None
    lines = text.split("\r\n")
    parts = lines[0].split()
    if len(parts) != 3:
        return None
    method, uri, version = parts
    if not method.isalpha() or not method.isupper():
        return None
    if not version.startswith("HTTP/"):
        return None
    headers: dict[str, str] = {}
    order: list[tuple[str, str]] = []
    for line in lines[1:]:
        if not line:
            continue
        if ":" not in line:
            return None
        name, _, value = line.partition(":")
        headers[name.strip().lower()] = value.strip()
        order.append((name.strip(), value.strip()))
    return _Request(method, uri, version, headers, order, head)


def _parse_authority(authority: str, default_port: int) -> Optional[TargetAddress]:
    host, sep, port_str = authority.rpartition(":")
    if not sep:
        host, port = authority, default_port
    else:
        if not port_str.isdigit():
            return None
        port = int(port_str)
    if not host or host.startswith("["):
        return None  # IPv6 targets are out of scope
    try:
        return TargetAddress(host, port)
    except ValueError:
        return None
