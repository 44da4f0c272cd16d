"""Shared domain types used across the proxy, meter and manager."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

# Proxy protocol variants
HTTP_FORWARD = "http_forward"
HTTP_CONNECT = "http_connect"
SOCKS5 = "socks5"
PROTOCOLS = (HTTP_FORWARD, HTTP_CONNECT, SOCKS5)

# Admission verdicts
ALLOW = "allow"
DENY_QUOTA = "deny_quota"
DENY_FILTER_DOMAIN = "deny_filter_domain"
DENY_FILTER_PORT = "deny_filter_port"
DENY_AUTH = "deny_auth"
VERDICTS = (ALLOW, DENY_QUOTA, DENY_FILTER_DOMAIN, DENY_FILTER_PORT, DENY_AUTH)


@dataclass(frozen=True)
class TargetAddress:
    """A connect target: lowercase-normalized host (domain or IP literal) and port."""

    host: str
    port: int

    def __post_init__(self):
        object.__setattr__(self, "host", self.host.lower().rstrip("."))
        if not self.host:
            raise ValueError("empty target host")
        if not 1 <= self.port <= 65535:
            raise ValueError(f"target port {self.port} out of range")

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"


@dataclass(frozen=True)
class AdmissionDecision:
    verdict: str
    detail: str = ""

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict != ALLOW and not self.detail:
            raise ValueError("deny decisions must carry a detail")

    @property
    def allowed(self) -> bool:
        return self.verdict == ALLOW


ALLOWED = AdmissionDecision(ALLOW)


@dataclass
class VpnStatus:
    active: bool
    interface_name: Optional[str] = None
    detected_at: float = 0.0

    def __post_init__(self):
        if self.active and not self.interface_name:
            raise ValueError("active VPN status requires an interface name")

    def as_dict(self) -> dict:
        return {"active": self.active, "interface_name": self.interface_name,
                "detected_at": self.detected_at}
