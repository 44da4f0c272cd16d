"""SOCKS5 listener (version 5 only, CONNECT command, IPv4/domain targets).

Method negotiation offers 0x00 (no auth) when auth is disabled and 0x02
(username/password subnegotiation) when enabled.  Reply codes: 0x00 success,
0x02 not allowed by ruleset (filter or quota deny), 0x04 host unreachable,
0x07 command not supported, 0x08 address type not supported (IPv6).
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
from typing import Optional

from ..config import AuthCredentials
from ..meter import UP, TrafficMeter
from ..model import (DENY_AUTH, SOCKS5, AdmissionDecision, TargetAddress)
from .common import authenticate
from .relay import relay
from .upstream import Dialer, UpstreamError

log = logging.getLogger(__name__)

VER = 0x05
METHOD_NONE = 0x00
METHOD_USERPASS = 0x02
METHOD_UNACCEPTABLE = 0xFF
CMD_CONNECT = 0x01
ATYP_IPV4 = 0x01
ATYP_DOMAIN = 0x03
ATYP_IPV6 = 0x04

REP_SUCCESS = 0x00
REP_NOT_ALLOWED = 0x02
REP_HOST_UNREACHABLE = 0x04
REP_CMD_UNSUPPORTED = 0x07
REP_ATYP_UNSUPPORTED = 0x08

HANDSHAKE_TIMEOUT = 30.0


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    data = b""
    while len(data) < n:
        chunk = sock.recv(n - len(data))
        if not chunk:
            raise ConnectionError("peer closed during SOCKS handshake")
        data += chunk
    return data


def _reply(sock: socket.socket, code: int) -> None:
    # BND.ADDR/BND.PORT are zero: we do not expose the egress address.
    sock.sendall(struct.pack("!BBBB", VER, code, 0x00, ATYP_IPV4) +
                 b"\x00\x00\x00\x00\x00\x00")


class Socks5Listener:
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
                                        name="socks5-proxy", daemon=True)
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
        except (ConnectionError, OSError, struct.error):
            pass  # malformed or aborted handshake; never crash the listener
        except Exception:
            log.exception("socks5 handler crashed for %s", addr)
        finally:
            try:
                conn.close()
            except OSError:
                pass

    # -- protocol ----------------------------------------------------------

    def handle(self, conn: socket.socket, client_ip: str) -> None:
        conn.settimeout(HANDSHAKE_TIMEOUT)
        ver, nmethods = struct.unpack("!BB", _recv_exact(conn, 2))
        if ver != VER:
            return  # not SOCKS5 (protocol isolation: close quietly)
        methods = _recv_exact(conn, nmethods)

        wanted = METHOD_USERPASS if self.auth is not None else METHOD_NONE
        if wanted not in methods:
            conn.sendall(struct.pack("!BB", VER, METHOD_UNACCEPTABLE))
            return
        conn.sendall(struct.pack("!BB", VER, wanted))

        if wanted == METHOD_USERPASS and not self._subnegotiate(conn, client_ip):
            return

        ver, cmd, _rsv, atyp = struct.unpack("!BBBB", _recv_exact(conn, 4))
        if ver != VER:
            return
        if atyp == ATYP_IPV6:
            _recv_exact(conn, 18)
            _reply(conn, REP_ATYP_UNSUPPORTED)
            return
        if atyp == ATYP_IPV4:
            host = socket.inet_ntoa(_recv_exact(conn, 4))
        elif atyp == ATYP_DOMAIN:
            length = _recv_exact(conn, 1)[0]
            host = _recv_exact(conn, length).decode("utf-8", errors="replace")
        else:
            _reply(conn, REP_ATYP_UNSUPPORTED)
            return
        port = struct.unpack("!H", _recv_exact(conn, 2))[0]
        if cmd != CMD_CONNECT:
            _reply(conn, REP_CMD_UNSUPPORTED)
            return
        try:
            target = TargetAddress(host, port)
        except ValueError:
            _reply(conn, REP_HOST_UNREACHABLE)
            return

        decision = self.manager.check_admission(client_ip, target)
        session = self.meter.open_session(client_ip, SOCKS5, target, decision)
        if not decision.allowed:
            _reply(conn, REP_NOT_ALLOWED)
            return
        try:
            upstream = self.dialer(target)
        except (UpstreamError, OSError):
            _reply(conn, REP_HOST_UNREACHABLE)
            self.meter.finalize_session(session)
            return
        try:
            _reply(conn, REP_SUCCESS)
            session.add_closer(lambda: _shutdown(conn))
            session.add_closer(lambda: _shutdown(upstream))
            relay(conn, upstream, session, self.meter, self.idle_timeout)
        finally:
            try:
                upstream.close()
            except OSError:
                pass
            self.meter.finalize_session(session)

    def _subnegotiate(self, conn: socket.socket, client_ip: str) -> bool:
        """RFC 1929 username/password subnegotiation."""
        ver = _recv_exact(conn, 1)[0]
        if ver != 0x01:
            conn.sendall(b"\x01\x01")
            return False
        ulen = _recv_exact(conn, 1)[0]
        username = _recv_exact(conn, ulen).decode("utf-8", errors="replace")
        plen = _recv_exact(conn, 1)[0]
        password = _recv_exact(conn, plen).decode("utf-8", errors="replace")
        if authenticate((username, password), self.auth):
            conn.sendall(b"\x01\x00")
            return True
        self.meter.open_session(
            client_ip, SOCKS5, None,
            AdmissionDecision(DENY_AUTH, "invalid SOCKS5 credentials"))
        conn.sendall(b"\x01\x01")
        return False


def _shutdown(sock: socket.socket) -> None:
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
