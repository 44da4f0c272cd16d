"""Gateway configuration: domain types, the flat key/value file format, validation.

The config file is a UTF-8 text document with one ``key = value`` pair per
line.  Blank lines and lines starting with ``#`` are ignored.  Unknown keys
are an error (they are almost always typos).  ``render_config`` produces a
document that ``load_config`` parses back to an identical config.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field, replace
from typing import Optional

SCHEMA_KEYS = {
    "listen_address",
    "http_port",
    "socks_port",
    "control_port",
    "auth_username",
    "auth_password",
    "egress_mode",
    "egress_value",
    "subnet",
    "probe_interval",
    "quota_mode",
    "quota_total_bytes",
    "quota_per_client_bytes",
    "quota_cooldown",
    "blocked_domains",
    "blocked_ports",
    "preset_file",
    "enabled_presets",
    "anomaly_multiplier",
    "perf_sample_interval",
    "store_path",
    "session_idle_timeout",
    "upstream_connect_timeout",
    "dashboard_dir",
}

EGRESS_MODES = ("auto_detect", "named_interface", "bind_address", "system_default")
QUOTA_MODES = ("off", "dynamic", "fixed")


class ConfigError(ValueError):
    """Raised for unparsable or invalid configuration; names the offending key(s)."""

    def __init__(self, message: str, keys: tuple[str, ...] = ()):
        super().__init__(message)
        self.keys = keys


@dataclass(frozen=True)
class AuthCredentials:
    username: str
    password: str


@dataclass(frozen=True)
class EgressSelector:
    """Where upstream sockets should egress: auto-detected tunnel, a named
    interface, a local bind address, or plain OS routing."""

    mode: str = "auto_detect"
    value: Optional[str] = None

    def __post_init__(self):
        if self.mode not in EGRESS_MODES:
            raise ConfigError(f"egress_mode must be one of {EGRESS_MODES}, got {self.mode!r}",
                              ("egress_mode",))
        needs_value = self.mode in ("named_interface", "bind_address")
        if needs_value and not self.value:
            raise ConfigError(f"egress_mode={self.mode} requires egress_value", ("egress_value",))
        if not needs_value and self.value:
            raise ConfigError(f"egress_mode={self.mode} takes no egress_value", ("egress_value",))


@dataclass(frozen=True)
class QuotaPolicy:
    """Quota regime: ``dynamic`` splits a shared total equally among active
    clients, ``fixed`` gives each client a constant allowance, ``off`` disables
    quota enforcement.  Quota usage counts upload plus download bytes."""

    mode: str = "off"
    total_quota_bytes: int = 0
    per_client_quota_bytes: int = 0
    cooldown: float = 300.0

    def __post_init__(self):
        if self.mode not in QUOTA_MODES:
            raise ConfigError(f"quota_mode must be one of {QUOTA_MODES}, got {self.mode!r}",
                              ("quota_mode",))
        if self.mode == "dynamic" and self.total_quota_bytes <= 0:
            raise ConfigError("dynamic quota requires quota_total_bytes > 0",
                              ("quota_total_bytes",))
        if self.mode == "fixed" and self.per_client_quota_bytes <= 0:
            raise ConfigError("fixed quota requires quota_per_client_bytes > 0",
                              ("quota_per_client_bytes",))
        if self.cooldown <= 0:
            raise ConfigError("quota_cooldown must be > 0", ("quota_cooldown",))


def normalize_domain(domain: str) -> str:
    d = domain.strip().lower().strip(".")
    if not d:
        raise ConfigError("empty domain in filter rules", ("blocked_domains",))
    return d


def _default_presets() -> dict[str, tuple[str, ...]]:
    from .filters import bundled_presets  # local import, filters depends on this module
    return bundled_presets()


@dataclass(frozen=True)
class FilterRuleSet:
    """Blocked domain suffixes and TCP ports, plus named presets that can be
    toggled on.  Domains are stored normalized: lowercase, no leading or
    trailing dot."""

    blocked_domains: frozenset[str] = frozenset()
    blocked_ports: frozenset[int] = frozenset()
    presets: dict[str, tuple[str, ...]] = field(default_factory=_default_presets)
    enabled_presets: frozenset[str] = frozenset()

    def __post_init__(self):
        for d in self.blocked_domains:
            if d != d.lower().strip() or d.startswith(".") or d.endswith("."):
                raise ConfigError(f"domain not normalized: {d!r}", ("blocked_domains",))
        for p in self.blocked_ports:
            if not 1 <= p <= 65535:
                raise ConfigError(f"blocked port out of range: {p}", ("blocked_ports",))
        for name in self.enabled_presets:
            if name not in self.presets:
                raise ConfigError(f"unknown preset enabled: {name!r}", ("enabled_presets",))

    def effective_domains(self) -> frozenset[str]:
        domains = set(self.blocked_domains)
        for name in self.enabled_presets:
            domains.update(self.presets[name])
        return frozenset(domains)


def _port(raw: str, key: str) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {raw!r}", (key,)) from None
    if not 1 <= value <= 65535:
        raise ConfigError(f"{key}: port {value} out of range 1-65535", (key,))
    return value


def _positive_float(raw: str, key: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {raw!r}", (key,)) from None
    if value <= 0:
        raise ConfigError(f"{key}: must be > 0", (key,))
    return value


@dataclass(frozen=True)
class GatewayConfig:
    listen_address: str = "127.0.0.1"
    http_port: int = 8080
    socks_port: int = 1080
    control_port: int = 8088
    auth: Optional[AuthCredentials] = None
    egress: EgressSelector = field(default_factory=EgressSelector)
    subnet: ipaddress.IPv4Network = field(
        default_factory=lambda: ipaddress.IPv4Network("192.168.43.0/24"))
    probe_interval: float = 10.0
    quota: QuotaPolicy = field(default_factory=QuotaPolicy)
    filters: FilterRuleSet = field(default_factory=FilterRuleSet)
    anomaly_multiplier: float = 3.0
    perf_sample_interval: float = 5.0
    store_path: str = "gateway.db"
    session_idle_timeout: float = 60.0
    upstream_connect_timeout: float = 10.0
    dashboard_dir: Optional[str] = None

    def __post_init__(self):
        ports = {
            "http_port": self.http_port,
            "socks_port": self.socks_port,
            "control_port": self.control_port,
        }
        seen: dict[int, str] = {}
        for key, port in ports.items():
            if not 1 <= port <= 65535:
                raise ConfigError(f"{key}: port {port} out of range 1-65535", (key,))
            if port in seen:
                raise ConfigError(
                    f"{seen[port]} and {key} must differ, both are {port}",
                    (seen[port], key))
            seen[port] = key
        if self.auth is not None:
            if not self.auth.username:
                raise ConfigError("auth_username: empty username", ("auth_username",))
            if not self.auth.password:
                raise ConfigError("auth_password: empty password", ("auth_password",))
        if self.probe_interval <= 0:
            raise ConfigError("probe_interval: must be > 0", ("probe_interval",))
        if self.perf_sample_interval <= 0:
            raise ConfigError("perf_sample_interval: must be > 0", ("perf_sample_interval",))
        if self.anomaly_multiplier <= 1:
            raise ConfigError("anomaly_multiplier: must be > 1", ("anomaly_multiplier",))
        if self.session_idle_timeout <= 0:
            raise ConfigError("session_idle_timeout: must be > 0", ("session_idle_timeout",))


def parse_config_text(text: str) -> dict[str, str]:
    """Parse the flat key/value document into a raw string map."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in SCHEMA_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", (key,))
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", (key,))
        pairs[key] = value.strip()
    return pairs


def config_from_pairs(pairs: dict[str, str]) -> GatewayConfig:
    kwargs: dict = {}
    if "listen_address" in pairs:
        try:
            ipaddress.ip_address(pairs["listen_address"])
        except ValueError:
            raise ConfigError(
                f"listen_address: not an IP address: {pairs['listen_address']!r}",
                ("listen_address",)) from None
        kwargs["listen_address"] = pairs["listen_address"]
    for key in ("http_port", "socks_port", "control_port"):
        if key in pairs:
            kwargs[key] = _port(pairs[key], key)

    user = pairs.get("auth_username", "")
    password = pairs.get("auth_password", "")
    if "auth_username" in pairs or "auth_password" in pairs:
        if not user:
            raise ConfigError("auth_username: empty username", ("auth_username",))
        if not password:
            raise ConfigError("auth_password: empty password", ("auth_password",))
        kwargs["auth"] = AuthCredentials(user, password)

    if "egress_mode" in pairs or "egress_value" in pairs:
        kwargs["egress"] = EgressSelector(
            mode=pairs.get("egress_mode", "auto_detect"),
            value=pairs.get("egress_value") or None)

    if "subnet" in pairs:
        try:
            kwargs["subnet"] = ipaddress.IPv4Network(pairs["subnet"])
        except ValueError as exc:
            raise ConfigError(f"subnet: {exc}", ("subnet",)) from None

    for key, target in (("probe_interval", "probe_interval"),
                        ("perf_sample_interval", "perf_sample_interval"),
                        ("session_idle_timeout", "session_idle_timeout"),
                        ("upstream_connect_timeout", "upstream_connect_timeout")):
        if key in pairs:
            kwargs[target] = _positive_float(pairs[key], key)

    if "anomaly_multiplier" in pairs:
        value = _positive_float(pairs["anomaly_multiplier"], "anomaly_multiplier")
        kwargs["anomaly_multiplier"] = value

    quota_keys = {"quota_mode", "quota_total_bytes", "quota_per_client_bytes", "quota_cooldown"}
    if quota_keys & pairs.keys():
        qkwargs: dict = {"mode": pairs.get("quota_mode", "off")}
        for key, target in (("quota_total_bytes", "total_quota_bytes"),
                            ("quota_per_client_bytes", "per_client_quota_bytes")):
            if key in pairs:
                try:
                    qkwargs[target] = int(pairs[key])
                except ValueError:
                    raise ConfigError(f"{key}: not an integer: {pairs[key]!r}", (key,)) from None
        if "quota_cooldown" in pairs:
            qkwargs["cooldown"] = _positive_float(pairs["quota_cooldown"], "quota_cooldown")
        kwargs["quota"] = QuotaPolicy(**qkwargs)

    filter_keys = {"blocked_domains", "blocked_ports", "preset_file", "enabled_presets"}
    if filter_keys & pairs.keys():
        domains = frozenset(
            normalize_domain(d) for d in pairs.get("blocked_domains", "").split(",") if d.strip())
        ports = frozenset(
            _port(p.strip(), "blocked_ports")
            for p in pairs.get("blocked_ports", "").split(",") if p.strip())
        presets: dict[str, tuple[str, ...]] = {}
        if "preset_file" in pairs:
            from .filters import load_presets  # local import: filters depends on this module
            presets = load_presets(pairs["preset_file"])
        else:
            from .filters import bundled_presets
            presets = bundled_presets()
        enabled = frozenset(
            name.strip() for name in pairs.get("enabled_presets", "").split(",") if name.strip())
        kwargs["filters"] = FilterRuleSet(
            blocked_domains=domains, blocked_ports=ports,
            presets=presets, enabled_presets=enabled)

    if "store_path" in pairs:
        kwargs["store_path"] = pairs["store_path"]
    if "dashboard_dir" in pairs:
        kwargs["dashboard_dir"] = pairs["dashboard_dir"]

    return GatewayConfig(**kwargs)


def load_config(source: str) -> GatewayConfig:
    """Load a config from a file path, or from inline text when the string
    contains a newline or an '=' (convenient for tests and one-liners)."""
    if "\n" in source or "=" in source:
        text = source
    else:
        try:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {source!r}: {exc.strerror}") from exc
    return config_from_pairs(parse_config_text(text))


def render_config(config: GatewayConfig) -> str:
    """Render a config back to the flat file format (round-trips via load_config)."""
    lines = [
        f"listen_address = {config.listen_address}",
        f"http_port = {config.http_port}",
        f"socks_port = {config.socks_port}",
        f"control_port = {config.control_port}",
    ]
    if config.auth:
        lines.append(f"auth_username = {config.auth.username}")
        lines.append(f"auth_password = {config.auth.password}")
    lines.append(f"egress_mode = {config.egress.mode}")
    if config.egress.value:
        lines.append(f"egress_value = {config.egress.value}")
    lines.append(f"subnet = {config.subnet}")
    lines.append(f"probe_interval = {config.probe_interval}")
    lines.append(f"quota_mode = {config.quota.mode}")
    if config.quota.mode == "dynamic":
        lines.append(f"quota_total_bytes = {config.quota.total_quota_bytes}")
    if config.quota.mode == "fixed":
        lines.append(f"quota_per_client_bytes = {config.quota.per_client_quota_bytes}")
    lines.append(f"quota_cooldown = {config.quota.cooldown}")
    if config.filters.blocked_domains:
        lines.append("blocked_domains = " + ",".join(sorted(config.filters.blocked_domains)))
    if config.filters.blocked_ports:
        lines.append("blocked_ports = " + ",".join(str(p) for p in sorted(config.filters.blocked_ports)))
    if config.filters.enabled_presets:
        lines.append("enabled_presets = " + ",".join(sorted(config.filters.enabled_presets)))
    lines.append(f"anomaly_multiplier = {config.anomaly_multiplier}")
    lines.append(f"perf_sample_interval = {config.perf_sample_interval}")
    lines.append(f"store_path = {config.store_path}")
    lines.append(f"session_idle_timeout = {config.session_idle_timeout}")
    lines.append(f"upstream_connect_timeout = {config.upstream_connect_timeout}")
    if config.dashboard_dir:
        lines.append(f"dashboard_dir = {config.dashboard_dir}")
    return "\n".join(lines) + "\n"


def with_quota(config: GatewayConfig, quota: QuotaPolicy) -> GatewayConfig:
    return replace(config, quota=quota)
