"""Control listener: local HTTP API, server-sent event stream, provisioning
endpoints and the dashboard static assets.

Mutations (quota, filters, disconnect) delegate to the traffic manager, which
serializes them; reads are concurrent snapshots.  From loopback the API is
open; from LAN addresses it requires the proxy credentials when configured.
The /help and /proxy.pac bootstrap endpoints never require credentials.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlsplit

from .config import ConfigError, FilterRuleSet, GatewayConfig, QuotaPolicy
from .events import EventBus, EventGapError
from .manager import TrafficManager
from .meter import TrafficMeter, UnknownClientError
from .perf import PerfSampler
from .provisioning import (PAC_MEDIA_TYPE, ProvisioningInfo, generate_pac,
                           generate_qr_payload, help_page)
from .proxy.common import authenticate, parse_basic_auth
from .vpn import detect_vpn

log = logging.getLogger(__name__)

OPEN_PATHS = {"/help", "/proxy.pac"}

STATIC_TYPES = {".html": "text/html; charset=utf-8",
                ".js": "application/javascript; charset=utf-8",
                ".css": "text/css; charset=utf-8",
                ".svg": "image/svg+xml",
                ".map": "application/json"}


class ControlServer:
    def __init__(self, config: GatewayConfig, meter: TrafficMeter,
                 manager: TrafficManager, sampler: PerfSampler,
                 events: EventBus, provisioning: ProvisioningInfo,
                 host: Optional[str] = None, port: Optional[int] = None):
        self.config = config
        self.meter = meter
        self.manager = manager
        self.sampler = sampler
        self.events = events
        self.provisioning = provisioning
        self.started_at = time.time()
        self.host = host if host is not None else config.listen_address
        self.port = port if port is not None else config.control_port
        self.dashboard_dir = Path(config.dashboard_dir) if config.dashboard_dir else None
        self._httpd: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        server = self

        class Handler(_ControlHandler):
            ctl = server

        self._httpd = ThreadingHTTPServer((self.host, self.port), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        name="control-api", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    # -- view assembly -----------------------------------------------------

    def clients_snapshot(self) -> list[dict]:
        allocations = self.manager.allocations()
        rows = []
        for record in self.meter.clients():
            stats = self.meter.get_client_stats(record.ip)
            alloc = allocations.get(record.ip)
            rows.append({
                "ip": record.ip,
                "identifier": record.identifier,
                "first_seen": record.first_seen,
                "last_seen": record.last_seen,
                "online": record.online,
                "discovery_source": record.discovery_source,
                "bytes_up": stats["bytes_up"],
                "bytes_down": stats["bytes_down"],
                "session_count": stats["session_count"],
                "live_sessions": stats["live_sessions"],
                "allocated_bytes": alloc.allocated_bytes if alloc else 0,
                "used_bytes": alloc.used_bytes if alloc else 0,
                "blocked_until": alloc.blocked_until if alloc else None,
            })
        return rows

    def status_snapshot(self) -> dict:
        vpn = detect_vpn(self.config.egress)
        rules = self.manager.filters
        return {
            "vpn": vpn.as_dict(),
            "uptime_seconds": time.time() - self.started_at,
            "quota_policy": _policy_dict(self.manager.policy),
            "filters": {
                "blocked_domains": sorted(rules.blocked_domains),
                "blocked_ports": sorted(rules.blocked_ports),
                "presets": {name: list(doms)
                            for name, doms in rules.presets.items()},
                "enabled_presets": sorted(rules.enabled_presets)},
            "provisioning": {
                "host": self.provisioning.host,
                "http_port": self.provisioning.http_port,
                "socks_port": self.provisioning.socks_port,
                "pac_url": self.provisioning.pac_url,
                "help_url": self.provisioning.help_url,
                "qr_payload": generate_qr_payload(self.provisioning),
                "auth_required": self.provisioning.credentials is not None,
            },
        }


def _policy_dict(policy: QuotaPolicy) -> dict:
    return {"mode": policy.mode,
            "total_quota_bytes": policy.total_quota_bytes,
            "per_client_quota_bytes": policy.per_client_quota_bytes,
            "cooldown": policy.cooldown}


class _ControlHandler(BaseHTTPRequestHandler):
    ctl: ControlServer
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("control %s - " + fmt, self.client_address[0], *args)

    # -- plumbing ----------------------------------------------------------

    def _json(self, status: int, payload) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str) -> None:
        self._json(status, {"error": message})

    def _text(self, status: int, content_type: str, body: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> Optional[dict]:
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length) if length else b""
        try:
            return json.loads(raw) if raw else {}
        except json.JSONDecodeError:
            return None

    def _authorized(self, path: str) -> bool:
        if path in OPEN_PATHS or not path.startswith("/api/"):
            return True
        auth = self.ctl.provisioning.credentials
        if auth is None or self.client_address[0].startswith("127."):
            return True
        creds = None
        header = self.headers.get("Authorization")
        if header:
            creds = parse_basic_auth(header)
        if authenticate(creds, auth):
            return True
        self.send_response(401)
        self.send_header("WWW-Authenticate", 'Basic realm="gateway"')
        self.send_header("Content-Length", "0")
        self.end_headers()
        return False

    # -- routing -----------------------------------------------------------

    def do_GET(self):
        split = urlsplit(self.path)
        path, query = split.path, parse_qs(split.query)
        if not self._authorized(path):
            return
        if path == "/api/clients":
            self._json(200, self.ctl.clients_snapshot())
        elif path == "/api/sessions":
            self._get_sessions(query)
        elif path == "/api/perf":
            window = float(query["window"][0]) if "window" in query else None
            self._json(200, [s.as_dict() for s in self.ctl.sampler.samples(window)])
        elif path == "/api/status":
            self._json(200, self.ctl.status_snapshot())
        elif path == "/api/events":
            self._stream_events(query)
        elif path == "/proxy.pac":
            self._text(200, PAC_MEDIA_TYPE,
                       generate_pac(self.ctl.provisioning).encode())
        elif path == "/help":
            self._text(200, "text/html; charset=utf-8",
                       help_page(self.ctl.provisioning).encode())
        elif path == "/" or not path.startswith("/api/"):
            self._static(path)
        else:
            self._error(404, f"no such endpoint: {path}")

    def do_PUT(self):
        path = urlsplit(self.path).path
        if not self._authorized(path):
            return
        body = self._read_body()
        if body is None:
            self._error(400, "invalid JSON body")
            return
        if path == "/api/quota":
            self._put_quota(body)
        elif path == "/api/filters":
            self._put_filters(body)
        else:
            self._error(404, f"no such endpoint: {path}")

    def do_POST(self):
        path = urlsplit(self.path).path
        if not self._authorized(path):
            return
        parts = path.strip("/").split("/")
        if len(parts) == 4 and parts[:2] == ["api", "clients"] \
                and parts[3] == "disconnect":
            ip = parts[2]
            try:
                count = self.ctl.manager.disconnect_client(ip)
            except UnknownClientError:
                self._error(404, f"unknown client {ip}")
                return
            self._json(200, {"client_ip": ip, "terminated_sessions": count})
        else:
            self._error(404, f"no such endpoint: {path}")

    # -- endpoint bodies ---------------------------------------------------

    def _get_sessions(self, query) -> None:
        client = query.get("client", [None])[0]
        sessions = []
        try:
            live = self.ctl.meter.live_sessions(client)
            done = self.ctl.meter.finalized_sessions(client)
        except UnknownClientError:
            self._error(404, f"unknown client {client}")
            return
        for session in done + live:
            sessions.append(session.as_record())
        sessions.sort(key=lambda s: s["started_at"])
        self._json(200, sessions)

    def _put_quota(self, body: dict) -> None:
        try:
            policy = QuotaPolicy(
                mode=body.get("mode", "off"),
                total_quota_bytes=int(body.get("total_quota_bytes", 0)),
                per_client_quota_bytes=int(body.get("per_client_quota_bytes", 0)),
                cooldown=float(body.get("cooldown", 300.0)))
        except (ConfigError, ValueError, TypeError) as exc:
            self._error(400, str(exc))
            return
        self.ctl.manager.set_policy(policy)
        self._json(200, _policy_dict(policy))

    def _put_filters(self, body: dict) -> None:
        current = self.ctl.manager.filters
        try:
            domains = body.get("blocked_domains", [])
            for domain in domains:
                if domain != domain.strip().lower() or domain.startswith(".") \
                        or domain.endswith("."):
                    raise ConfigError(f"domain not normalized: {domain!r}")
            rules = FilterRuleSet(
                blocked_domains=frozenset(domains),
                blocked_ports=frozenset(int(p) for p in body.get("blocked_ports", [])),
                presets=current.presets,
                enabled_presets=frozenset(body.get("enabled_presets", [])))
        except (ConfigError, ValueError, TypeError) as exc:
            self._error(400, str(exc))
            return
        self.ctl.manager.set_filters(rules)
        self._json(200, {
            "blocked_domains": sorted(rules.blocked_domains),
            "blocked_ports": sorted(rules.blocked_ports),
            "presets": {name: list(doms) for name, doms in rules.presets.items()},
            "enabled_presets": sorted(rules.enabled_presets)})

    def _stream_events(self, query) -> None:
        since = None
        if "since" in query:
            since = int(query["since"][0])
        elif self.headers.get("Last-Event-ID"):
            since = int(self.headers["Last-Event-ID"])
        try:
            subscription = self.ctl.events.subscribe(since)
        except EventGapError as exc:
            self._error(409, str(exc))
            return
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Connection", "close")
        self.end_headers()
        try:
            while True:
                event = subscription.next(timeout=15.0)
                if event is None:
                    if subscription.overflowed:
                        self.wfile.write(b"event: overflow\ndata: {}\n\n")
                        self.wfile.flush()
                        return
                    if subscription.closed:
                        return
                    self.wfile.write(b": keep-alive\n\n")
                    self.wfile.flush()
                    continue
                data = json.dumps(event.as_dict())
                frame = f"id: {event.seq}\nevent: {event.type}\ndata: {data}\n\n"
                self.wfile.write(frame.encode())
                self.wfile.flush()
        except OSError:
            pass  # subscriber went away
        finally:
            subscription.close()

    def _static(self, path: str) -> None:
        root = self.ctl.dashboard_dir
        if root is None:
            if path in ("/", "/index.html"):
                body = (b"<!DOCTYPE html><html><body><h1>Gateway</h1>"
                        b"<p>No dashboard assets configured. See "
                        b"<a href='/help'>/help</a> for client setup.</p>"
                        b"</body></html>")
                self._text(200, "text/html; charset=utf-8", body)
            else:
                self._error(404, f"no such path: {path}")
            return
        name = "index.html" if path == "/" else path.lstrip("/")
        target = (root / name).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._error(404, f"no such path: {path}")
            return
        content_type = STATIC_TYPES.get(target.suffix, "application/octet-stream")
        self._text(200, content_type, target.read_bytes())
