"""Shared proxy-handler helpers: credential check, header reading, status map."""

from __future__ import annotations

import base64
import hmac
import socket
from typing import Optional

from ..config import AuthCredentials
from ..model import (DENY_AUTH, DENY_FILTER_DOMAIN, DENY_FILTER_PORT,
                     DENY_QUOTA)

MAX_HEAD = 64 * 1024

# HTTP status per admission verdict
VERDICT_STATUS = {
    DENY_AUTH: (407, "Proxy Authentication Required"),
    DENY_FILTER_DOMAIN: (403, "Forbidden"),
    DENY_FILTER_PORT: (403, "Forbidden"),
    DENY_QUOTA: (429, "Too Many Requests"),
}


def authenticate(credentials: Optional[tuple[str, str]],
                 configured: Optional[AuthCredentials]) -> bool:
    """True when no auth is configured, else constant-time compare of both fields."""
    if configured is None:
        return True
    if credentials is None:
        return False
    user, password = credentials
    ok_user = hmac.compare_digest(user.encode(), configured.username.encode())
    ok_pass = hmac.compare_digest(password.encode(), configured.password.encode())
    return ok_user and ok_pass


def parse_basic_auth(header_value: str) -> Optional[tuple[str, str]]:
    parts = header_value.split(None, 1)
    if len(parts) != 2 or parts[0].lower() != "basic":
        return None
    try:
        decoded = base64.b64decode(parts[1], validate=True).decode("utf-8")
    except (ValueError, UnicodeDecodeError):
        return None
    if ":" not in decoded:
        return None
    user, _, password = decoded.partition(":")
    return user, password


def recv_head(sock: socket.socket, already: bytes = b"") -> tuple[bytes, bytes]:
    """Read until the blank line ending an HTTP head.  Returns (head, leftover).
    Raises ValueError when the head is oversized or the peer closes early."""
    data = already
    while b"\r\n\r\n" not in data:
        if len(data) > MAX_HEAD:
            raise ValueError("request head too large")
        chunk = sock.recv(8192)
        if not chunk:
            raise ValueError("connection closed before end of head")
        data += chunk
    head, _, leftover = data.partition(b"\r\n\r\n")
    return head + b"\r\n\r\n", leftover


def http_error(status: int, reason: str, headers: Optional[dict] = None,
               body: str = "") -> bytes:
    payload = body.encode()
    lines = [f"HTTP/1.1 {status} {reason}"]
    for key, value in (headers or {}).items():
        lines.append(f"{key}: {value}")
    lines.append("Content-Length: " + str(len(payload)))
    lines.append("Connection: close")
    return ("\r\n".join(lines) + "\r\n\r\n").encode() + payload


def proxy_auth_required() -> bytes:
    return http_error(407, "Proxy Authentication Required",
                      {"Proxy-Authenticate": 'Basic realm="gateway"'})
