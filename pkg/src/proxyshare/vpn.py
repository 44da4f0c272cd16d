"""VPN/egress detection from the host interface table.

Detection is a tunnel-name heuristic over the up interfaces that carry an
address.  Prefix precedence is fixed: tun, utun, tap, wg, ppp, tailscale
(case-insensitive); the first prefix with a match wins, ties broken by
interface name.  A configured named_interface egress overrides the heuristic.
Detection is best-effort and never fatal.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .config import EgressSelector
from .model import VpnStatus

log = logging.getLogger(__name__)

TUNNEL_PREFIXES = ("tun", "utun", "tap", "wg", "ppp", "tailscale")


@dataclass(frozen=True)
class InterfaceInfo:
    name: str
    is_up: bool
    addresses: tuple[str, ...]


def system_interfaces() -> list[InterfaceInfo]:
    """Enumerate host interfaces via psutil."""
    import psutil
    stats = psutil.net_if_stats()
    addrs = psutil.net_if_addrs()
    interfaces = []
    for name, addr_list in addrs.items():
        ips = tuple(a.address for a in addr_list
                    if getattr(a.family, "name", "") in ("AF_INET", "AF_INET6"))
        is_up = name in stats and stats[name].isup
        interfaces.append(InterfaceInfo(name=name, is_up=is_up, addresses=ips))
    return interfaces


def detect_vpn(egress: Optional[EgressSelector] = None,
               interfaces: Optional[Callable[[], list[InterfaceInfo]]] = None,
               clock: Callable[[], float] = time.time) -> VpnStatus:
    """Return the current VPN status.

    ``interfaces`` is an injectable enumerator (the host table by default) so
    tests can supply a mock interface table.
    """
    try:
        table = (interfaces or system_interfaces)()
    except Exception as exc:
        log.warning("interface enumeration failed, assuming no VPN: %s", exc)
        return VpnStatus(active=False, detected_at=clock())

    usable = [i for i in table if i.is_up and i.addresses]

    if egress is not None and egress.mode == "named_interface":
        for iface in usable:
            if iface.name == egress.value:
                return VpnStatus(active=True, interface_name=iface.name,
                                 detected_at=clock())
        log.warning("configured egress interface %r not found or not up",
                    egress.value)
        return VpnStatus(active=False, detected_at=clock())

    for prefix in TUNNEL_PREFIXES:
        matches = sorted(i.name for i in usable
                         if i.name.lower().startswith(prefix))
        if matches:
            return VpnStatus(active=True, interface_name=matches[0],
                             detected_at=clock())
    return VpnStatus(active=False, detected_at=clock())


def interface_address(name: str,
                      interfaces: Optional[Callable[[], list[InterfaceInfo]]] = None
                      ) -> Optional[str]:
    """First IPv4 address of a named interface, for egress socket binding."""
    try:
        table = (interfaces or system_interfaces)()
    except Exception:
        return None
    for iface in table:
        if iface.name == name:
            for addr in iface.addresses:
                if ":" not in addr:
                    return addr
    return None
