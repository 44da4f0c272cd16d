"""proxyshare: a LAN gateway that shares one upstream (VPN) connection over
HTTP/HTTPS/SOCKS5 with per-client byte accounting, quota enforcement, traffic
filtering, anomaly detection, client provisioning and a fairness benchmark
harness."""

from .config import (AuthCredentials, ConfigError, EgressSelector,
                     FilterRuleSet, GatewayConfig, QuotaPolicy, load_config,
                     render_config)
from .model import AdmissionDecision, TargetAddress, VpnStatus

__all__ = [
    "AuthCredentials", "ConfigError", "EgressSelector", "FilterRuleSet",
    "GatewayConfig", "QuotaPolicy", "load_config", "render_config",
    "AdmissionDecision", "TargetAddress", "VpnStatus",
]
