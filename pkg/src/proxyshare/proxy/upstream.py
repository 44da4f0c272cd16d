"""Upstream connections bound to the selected egress.

The LAN-side listeners stay on the hotspot/LAN interface; upstream sockets
bind their local side to the tunnel interface/address before connecting so
internet-bound traffic enters the VPN while LAN traffic bypasses it.
"""

from __future__ import annotations

import logging
import socket
from typing import Callable, Optional

from ..config import EgressSelector
from ..model import TargetAddress
from ..vpn import detect_vpn, interface_address

log = logging.getLogger(__name__)

DEFAULT_CONNECT_TIMEOUT = 10.0

# A dialer opens an upstream TCP connection to a target.  Listeners receive a
# dialer rather than dialing themselves, so tests can assert that denied
# targets never cause a connection attempt.
Dialer = Callable[[TargetAddress], socket.socket]


class UpstreamError(OSError):
    """kind is one of: resolve, bind, connect."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def resolve_ipv4(host: str) -> str:
    try:
        infos = socket.getaddrinfo(host, None, socket.AF_INET, socket.SOCK_STREAM)
    except socket.gaierror as exc:
        raise UpstreamError("resolve", f"cannot resolve {host!r}: {exc}") from exc
    if not infos:
        raise UpstreamError("resolve", f"no IPv4 address for {host!r}")
    return infos[0][4][0]


def open_upstream(target: TargetAddress, egress: EgressSelector,
                  timeout: float = DEFAULT_CONNECT_TIMEOUT) -> socket.socket:
    """Connect to the target, local side bound per the egress selector.
    system_default skips binding and lets OS routing decide."""
    addr = resolve_ipv4(target.host)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        bind_ip: Optional[str] = None
        if egress.mode == "bind_address":
            bind_ip = egress.value
        elif egress.mode == "named_interface":
            try:
                sock.setsockopt(socket.SOL_SOCKET, socket.SO_BINDTODEVICE,
                                egress.value.encode() + b"\0")
            except (OSError, AttributeError):
                # SO_BINDTODEVICE needs privileges; fall back to binding the
                # interface's address, which pins the source the same way.
                bind_ip = interface_address(egress.value)
                if bind_ip is None:
                    raise UpstreamError(
                        "bind", f"egress interface {egress.value!r} has no address")
        if bind_ip is not None:
            try:
                sock.bind((bind_ip, 0))
            except OSError as exc:
                raise UpstreamError("bind", f"cannot bind egress {bind_ip}: {exc}") from exc
        sock.settimeout(timeout)
        try:
            sock.connect((addr, target.port))
        except OSError as exc:
            raise UpstreamError("connect", f"cannot connect to {target}: {exc}") from exc
        sock.settimeout(None)
        return sock
    except BaseException:
        sock.close()
        raise


def effective_egress(egress: EgressSelector) -> EgressSelector:
    """Resolve auto_detect at startup: bind to the detected tunnel interface,
    or fall back to system_default (the gateway stays usable without a VPN)."""
    if egress.mode != "auto_detect":
        return egress
    status = detect_vpn()
    if status.active:
        log.info("auto-detected VPN egress on %s", status.interface_name)
        return EgressSelector(mode="named_interface", value=status.interface_name)
    log.warning("no VPN tunnel detected; egress falls back to system routing "
                "(traffic will NOT be tunneled)")
    return EgressSelector(mode="system_default")


def make_dialer(egress: EgressSelector,
                timeout: float = DEFAULT_CONNECT_TIMEOUT) -> Dialer:
    concrete = effective_egress(egress)

    def dial(target: TargetAddress) -> socket.socket:
        return open_upstream(target, concrete, timeout)

    return dial
