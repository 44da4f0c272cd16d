"""Domain/port filtering with dot-boundary subdomain matching and named presets."""

from __future__ import annotations

import ipaddress
import json
from importlib import resources

from .config import ConfigError, FilterRuleSet, normalize_domain


def bundled_presets() -> dict[str, tuple[str, ...]]:
    """Presets shipped as package data: preset name -> domain list."""
    text = resources.files("proxyshare.data").joinpath("presets.json").read_text("utf-8")
    raw = json.loads(text)
    return {name: tuple(normalize_domain(d) for d in domains) for name, domains in raw.items()}


def load_presets(path: str) -> dict[str, tuple[str, ...]]:
    """Load a preset file: a JSON object mapping preset name -> array of domains."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"preset_file: cannot read {path!r}: {exc.strerror}",
                          ("preset_file",)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"preset_file: invalid JSON: {exc}", ("preset_file",)) from exc
    if not isinstance(raw, dict) or not all(isinstance(v, list) for v in raw.values()):
        raise ConfigError("preset_file: expected {name: [domains...]}", ("preset_file",))
    return {name: tuple(normalize_domain(d) for d in domains) for name, domains in raw.items()}


def is_ip_literal(host: str) -> bool:
    try:
        ipaddress.ip_address(host)
        return True
    except ValueError:
        return False


def domain_blocked(host: str, rules: FilterRuleSet) -> bool:
    """True iff host is a blocked domain or a subdomain of one.

    Matching is exact-or-dot-boundary-suffix: blocked "youtube.com" matches
    "youtube.com" and "m.youtube.com" but never "notyoutube.com".  IP-literal
    hosts match only exact IP entries.
    """
    host = host.lower().rstrip(".")
    blocked = rules.effective_domains()
    if is_ip_literal(host):
        return host in blocked
    for domain in blocked:
        if host == domain or host.endswith("." + domain):
            return True
    return False


def port_blocked(port: int, rules: FilterRuleSet) -> bool:
    return port in rules.blocked_ports
